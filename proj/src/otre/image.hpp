#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace otre {

/// Planar channels x height x width image. Pixel values are doubles; images
/// produced by load_image() lie in [0, 1].
class ImageTensor {
public:
  ImageTensor() = default;
  ImageTensor(int channels, int height, int width, double fill = 0.0);
  ImageTensor(int channels, int height, int width, std::vector<double> data);

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept { return std::size_t(height_) * std::size_t(width_); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double &at(int c, int y, int x) noexcept { return data_[(std::size_t(c) * height_ + y) * width_ + x]; }
  double at(int c, int y, int x) const noexcept { return data_[(std::size_t(c) * height_ + y) * width_ + x]; }

  std::span<double> plane(int c) noexcept { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const noexcept { return {data_.data() + c * plane_size(), plane_size()}; }

  std::vector<double> &data() noexcept { return data_; }
  const std::vector<double> &data() const noexcept { return data_; }

  bool same_shape(const ImageTensor &o) const noexcept {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  bool all_finite() const noexcept;
  void clamp01() noexcept;

  friend bool operator==(const ImageTensor &, const ImageTensor &) = default;

private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Throws ShapeMismatch with `what` as context when shapes differ.
void require_same_shape(const ImageTensor &a, const ImageTensor &b, const char *what);

// Elementwise helpers used by the solver and the metrics.
double dot(const ImageTensor &a, const ImageTensor &b);
double l2_norm(const ImageTensor &a);
double l2_distance(const ImageTensor &a, const ImageTensor &b);
double max_abs(const ImageTensor &a);

/// Decodes PNG (8/16 bit, any color type) or baseline JPEG. Alpha is dropped,
/// palette images are expanded, gray stays single-channel.
ImageTensor load_image(const std::filesystem::path &path);

/// Encodes by extension: `.png` (8-bit, deterministic byte stream) or
/// `.jpg`/`.jpeg` (quality 95). Values are clamped and rounded to v*255.
void save_image(const ImageTensor &img, const std::filesystem::path &path);

/// Quantizes to interleaved 8-bit samples, round-half-up of clamp(v)*255.
std::vector<unsigned char> quantize_8bit(const ImageTensor &img);

/// Center square crop (length min(h, w), offset floor((dim - len) / 2)) followed
/// by bilinear resampling with half-pixel centers to side x side.
ImageTensor preprocess(const ImageTensor &img, int side = 256);

} // namespace otre
