#include "otre/image.hpp"

#include "otre/error.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include <jpeglib.h>
#include <png.h>
#include <zlib.h>

namespace otre {

namespace {

std::string lower_ext(const std::filesystem::path &path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return ext;
}

struct FileCloser {
  void operator()(std::FILE *f) const noexcept {
    if (f)
      std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path &path, const char *mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f)
    fail(ErrorCode::IoError, "cannot open " + path.string());
  return f;
}

// ---------------------------------------------------------------------------
// PNG

ImageTensor read_png(const std::filesystem::path &path) {
  FilePtr file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    fail(ErrorCode::CorruptData, "not a PNG stream: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::Internal, "libpng allocation failed");
  }
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  // Locals touched after setjmp are only written before it or are volatile.
  volatile bool ok = false;
  volatile int v_channels = 0, v_height = 0, v_width = 0, v_depth = 8;
  if (setjmp(png_jmpbuf(png)) == 0) {
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE)
      png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
      png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA)
      png_set_strip_alpha(png);
    if (bit_depth == 16)
      png_set_swap(png);
    png_read_update_info(png, info);
    const int h = int(png_get_image_height(png, info));
    v_width = int(png_get_image_width(png, info));
    v_height = h;
    v_channels = int(png_get_channels(png, info));
    v_depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * std::size_t(h));
    rows.resize(std::size_t(h));
    for (int y = 0; y < h; ++y)
      rows[std::size_t(y)] = pixels.data() + stride * std::size_t(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    ok = true;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok)
    fail(ErrorCode::CorruptData, "corrupt PNG: " + path.string());
  const int channels = v_channels, height = v_height, width = v_width, depth = v_depth;
  if (channels != 1 && channels != 3)
    fail(ErrorCode::UnsupportedFormat, "unsupported PNG channel layout: " + path.string());

  ImageTensor img(channels, height, width);
  const double scale = depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t i = std::size_t(y * width + x) * std::size_t(channels) + std::size_t(c);
        double v;
        if (depth == 16) {
          std::uint16_t s;
          std::memcpy(&s, pixels.data() + 2 * i, 2);
          v = s;
        } else {
          v = pixels[i];
        }
        img.at(c, y, x) = v / scale;
      }
    }
  }
  return img;
}

void append_chunk(std::string &out, const char type[4], const unsigned char *data, std::size_t len) {
  auto put32 = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8)
      out.push_back(char((v >> s) & 0xff));
  };
  put32(std::uint32_t(len));
  const std::size_t start = out.size();
  out.append(type, 4);
  out.append(reinterpret_cast<const char *>(data), len);
  const uLong crc = crc32(0L, reinterpret_cast<const Bytef *>(out.data() + start), uInt(len + 4));
  put32(std::uint32_t(crc));
}

// Minimal encoder: IHDR, one IDAT (filter 0 on every row, zlib level 6), IEND.
// No ancillary chunks, so the byte stream is a pure function of the pixels.
void write_png(const ImageTensor &img, const std::filesystem::path &path) {
  const auto samples = quantize_8bit(img);
  const std::size_t stride = std::size_t(img.width()) * std::size_t(img.channels());
  std::vector<unsigned char> raw;
  raw.reserve((stride + 1) * std::size_t(img.height()));
  for (int y = 0; y < img.height(); ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), samples.begin() + std::ptrdiff_t(stride * y), samples.begin() + std::ptrdiff_t(stride * (y + 1)));
  }
  uLongf zlen = compressBound(uLong(raw.size()));
  std::vector<unsigned char> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), uLong(raw.size()), 6) != Z_OK)
    fail(ErrorCode::Internal, "zlib compression failed");

  unsigned char ihdr[13];
  auto be32 = [](unsigned char *p, std::uint32_t v) {
    p[0] = (v >> 24) & 0xff;
    p[1] = (v >> 16) & 0xff;
    p[2] = (v >> 8) & 0xff;
    p[3] = v & 0xff;
  };
  be32(ihdr, std::uint32_t(img.width()));
  be32(ihdr + 4, std::uint32_t(img.height()));
  ihdr[8] = 8;
  ihdr[9] = img.channels() == 3 ? 2 : 0;
  ihdr[10] = ihdr[11] = ihdr[12] = 0;

  std::string out("\x89PNG\r\n\x1a\n", 8);
  append_chunk(out, "IHDR", ihdr, sizeof ihdr);
  append_chunk(out, "IDAT", z.data(), zlen);
  append_chunk(out, "IEND", nullptr, 0);

  std::ofstream f(path, std::ios::binary);
  if (!f)
    fail(ErrorCode::IoError, "cannot open " + path.string());
  f.write(out.data(), std::streamsize(out.size()));
  if (!f)
    fail(ErrorCode::IoError, "write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// JPEG

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_throw(j_common_ptr cinfo) {
  auto *err = reinterpret_cast<JpegError *>(cinfo->err);
  std::longjmp(err->jump, 1);
}

ImageTensor read_jpeg(const std::filesystem::path &path) {
  FilePtr file = open_file(path, "rb");
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_throw;
  std::vector<unsigned char> pixels;
  volatile bool ok = false;
  volatile int v_channels = 0, v_height = 0, v_width = 0;
  if (setjmp(err.jump) == 0) {
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    v_width = int(cinfo.output_width);
    v_height = int(cinfo.output_height);
    v_channels = cinfo.output_components;
    const std::size_t stride = std::size_t(cinfo.output_width) * std::size_t(cinfo.output_components);
    pixels.resize(stride * std::size_t(cinfo.output_height));
    while (cinfo.output_scanline < cinfo.output_height) {
      JSAMPROW row = pixels.data() + stride * cinfo.output_scanline;
      jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    ok = true;
  }
  jpeg_destroy_decompress(&cinfo);
  if (!ok)
    fail(ErrorCode::CorruptData, "corrupt JPEG: " + path.string());
  const int channels = v_channels, height = v_height, width = v_width;
  ImageTensor img(channels, height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(c, y, x) = pixels[std::size_t((y * width + x) * channels + c)] / 255.0;
  return img;
}

void write_jpeg(const ImageTensor &img, const std::filesystem::path &path) {
  const auto samples = quantize_8bit(img);
  FilePtr file = open_file(path, "wb");
  jpeg_compress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_throw;
  volatile bool ok = false;
  if (setjmp(err.jump) == 0) {
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, file.get());
    cinfo.image_width = JDIMENSION(img.width());
    cinfo.image_height = JDIMENSION(img.height());
    cinfo.input_components = img.channels();
    cinfo.in_color_space = img.channels() == 3 ? JCS_RGB : JCS_GRAYSCALE;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, 95, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    const std::size_t stride = std::size_t(img.width()) * std::size_t(img.channels());
    while (cinfo.next_scanline < cinfo.image_height) {
      auto row = const_cast<JSAMPROW>(samples.data() + stride * cinfo.next_scanline);
      jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    ok = true;
  }
  jpeg_destroy_compress(&cinfo);
  if (!ok)
    fail(ErrorCode::IoError, "JPEG encoding failed: " + path.string());
}

} // namespace

// ---------------------------------------------------------------------------

ImageTensor::ImageTensor(int channels, int height, int width, double fill)
  : channels_(channels), height_(height), width_(width),
    data_(std::size_t(channels) * std::size_t(height) * std::size_t(width), fill) {
  if (channels < 1 || height < 1 || width < 1)
    fail(ErrorCode::InvalidArgument, "image dimensions must be positive");
}

ImageTensor::ImageTensor(int channels, int height, int width, std::vector<double> data)
  : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (channels < 1 || height < 1 || width < 1)
    fail(ErrorCode::InvalidArgument, "image dimensions must be positive");
  if (data_.size() != std::size_t(channels) * std::size_t(height) * std::size_t(width))
    fail(ErrorCode::ShapeMismatch, "image buffer size does not match dimensions");
}

bool ImageTensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void ImageTensor::clamp01() noexcept {
  for (double &v : data_)
    v = std::clamp(v, 0.0, 1.0);
}

void require_same_shape(const ImageTensor &a, const ImageTensor &b, const char *what) {
  if (!a.same_shape(b))
    fail(ErrorCode::ShapeMismatch,
         std::string(what) + ": shape " + std::to_string(a.channels()) + "x" + std::to_string(a.height()) + "x" +
           std::to_string(a.width()) + " vs " + std::to_string(b.channels()) + "x" + std::to_string(b.height()) +
           "x" + std::to_string(b.width()));
}

double dot(const ImageTensor &a, const ImageTensor &b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a.data()[i] * b.data()[i];
  return s;
}

double l2_norm(const ImageTensor &a) {
  double s = 0.0;
  for (double v : a.data())
    s += v * v;
  return std::sqrt(s);
}

double l2_distance(const ImageTensor &a, const ImageTensor &b) {
  require_same_shape(a, b, "l2_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double max_abs(const ImageTensor &a) {
  double m = 0.0;
  for (double v : a.data())
    m = std::max(m, std::abs(v));
  return m;
}

ImageTensor load_image(const std::filesystem::path &path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    fail(ErrorCode::MissingFile, "no such file: " + path.string());
  const std::string ext = lower_ext(path);
  ImageTensor img;
  if (ext == ".png")
    img = read_png(path);
  else if (ext == ".jpg" || ext == ".jpeg")
    img = read_jpeg(path);
  else
    fail(ErrorCode::UnsupportedFormat, "unsupported image format: " + path.string());
  return img;
}

void save_image(const ImageTensor &img, const std::filesystem::path &path) {
  if (img.empty())
    fail(ErrorCode::InvalidArgument, "cannot save an empty image");
  if (img.channels() != 1 && img.channels() != 3)
    fail(ErrorCode::UnsupportedFormat, "only 1- or 3-channel images can be encoded");
  const std::string ext = lower_ext(path);
  if (ext == ".png")
    write_png(img, path);
  else if (ext == ".jpg" || ext == ".jpeg")
    write_jpeg(img, path);
  else
    fail(ErrorCode::UnsupportedFormat, "unsupported output format: " + path.string());
}

std::vector<unsigned char> quantize_8bit(const ImageTensor &img) {
  std::vector<unsigned char> out(img.size());
  const int ch = img.channels();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < ch; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        out[std::size_t((y * img.width() + x) * ch + c)] = static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
      }
  return out;
}

ImageTensor preprocess(const ImageTensor &img, int side) {
  if (side < 1)
    fail(ErrorCode::InvalidArgument, "preprocess side must be positive");
  if (img.empty())
    fail(ErrorCode::InvalidArgument, "preprocess of an empty image");
  const int len = std::min(img.height(), img.width());
  const int oy = (img.height() - len) / 2;
  const int ox = (img.width() - len) / 2;
  ImageTensor out(img.channels(), side, side);
  const double scale = double(len) / double(side);

  // Source coordinate of output index i under half-pixel alignment.
  struct Tap {
    int lo, hi;
    double t;
  };
  std::vector<Tap> taps(static_cast<std::size_t>(side));
  for (int i = 0; i < side; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, double(len - 1));
    const int lo = int(std::floor(src));
    const int hi = std::min(lo + 1, len - 1);
    taps[std::size_t(i)] = {lo, hi, src - lo};
  }
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < side; ++y) {
      const Tap &ty = taps[std::size_t(y)];
      for (int x = 0; x < side; ++x) {
        const Tap &tx = taps[std::size_t(x)];
        const double top = img.at(c, oy + ty.lo, ox + tx.lo) * (1.0 - tx.t) + img.at(c, oy + ty.lo, ox + tx.hi) * tx.t;
        const double bot = img.at(c, oy + ty.hi, ox + tx.lo) * (1.0 - tx.t) + img.at(c, oy + ty.hi, ox + tx.hi) * tx.t;
        out.at(c, y, x) = top * (1.0 - ty.t) + bot * ty.t;
      }
    }
  return out;
}

} // namespace otre
