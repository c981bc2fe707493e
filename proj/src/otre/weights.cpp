#include "otre/weights.hpp"

#include "otre/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace otre {

static_assert(std::endian::native == std::endian::little, "the OTRE codec assumes a little-endian host");

const char *layer_kind_name(LayerKind kind) noexcept {
  switch (kind) {
  case LayerKind::Conv2d: return "conv2d";
  case LayerKind::Eca: return "eca";
  case LayerKind::Norm: return "norm";
  case LayerKind::Bias: return "bias";
  }
  return "unknown";
}

std::size_t LayerRecord::element_count() const noexcept {
  std::size_t n = 1;
  for (auto d : shape)
    n *= d;
  return n;
}

const LayerRecord *WeightManifest::find(std::string_view name) const noexcept {
  for (const auto &r : records)
    if (r.name == name)
      return &r;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Architecture

void GeneratorSpec::validate() const {
  if (depth < 1 || base_channels < 1)
    fail(ErrorCode::InvalidArgument, "generator depth and base channels must be >= 1");
  if (eca_gamma < 1 || eca_b < 0)
    fail(ErrorCode::InvalidArgument, "ECA gamma must be >= 1 and b >= 0");
  if (image_channels != 1 && image_channels != 3)
    fail(ErrorCode::InvalidArgument, "generator image channels must be 1 or 3");
  if (depth > 16 || (std::int64_t(base_channels) << depth) > (1 << 20))
    fail(ErrorCode::InvalidArgument, "generator is unreasonably large");
}

std::string GeneratorSpec::arch_id() const {
  std::ostringstream os;
  os << "unet-eca-d" << depth << "-c" << base_channels;
  if (image_channels != 3)
    os << "-i" << image_channels;
  if (eca_gamma != 2 || eca_b != 1)
    os << "-g" << eca_gamma << "b" << eca_b;
  if (!normalize)
    os << "-nonorm";
  if (!residual_output)
    os << "-direct";
  return os.str();
}

namespace {

bool parse_int(std::string_view s, int &out) {
  if (s.empty() || s.size() > 9 || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return false;
  out = std::stoi(std::string(s));
  return true;
}

} // namespace

GeneratorSpec GeneratorSpec::from_arch_id(const std::string &id) {
  auto bad = [&]() { fail(ErrorCode::CorruptData, "unrecognized generator architecture '" + id + "'"); };
  std::vector<std::string> tok;
  std::stringstream ss(id);
  for (std::string t; std::getline(ss, t, '-');)
    tok.push_back(t);
  if (tok.size() < 4 || tok[0] != "unet" || tok[1] != "eca" || tok[2].size() < 2 || tok[2][0] != 'd' ||
      tok[3].size() < 2 || tok[3][0] != 'c')
    bad();
  GeneratorSpec s;
  if (!parse_int(std::string_view(tok[2]).substr(1), s.depth) ||
      !parse_int(std::string_view(tok[3]).substr(1), s.base_channels))
    bad();
  for (std::size_t i = 4; i < tok.size(); ++i) {
    const std::string_view t = tok[i];
    if (t == "nonorm") {
      s.normalize = false;
    } else if (t == "direct") {
      s.residual_output = false;
    } else if (t.size() >= 2 && t[0] == 'i') {
      if (!parse_int(t.substr(1), s.image_channels))
        bad();
    } else if (t.size() >= 4 && t[0] == 'g' && t.find('b') != std::string_view::npos) {
      const auto bpos = t.find('b');
      if (!parse_int(t.substr(1, bpos - 1), s.eca_gamma) || !parse_int(t.substr(bpos + 1), s.eca_b))
        bad();
    } else {
      bad();
    }
  }
  s.validate();
  // Canonical spelling only, so that arch_id round-trips byte for byte.
  if (s.arch_id() != id)
    bad();
  return s;
}

int eca_kernel_size(int channels, int gamma, int b) {
  const int t = int(std::abs((std::log2(double(channels)) + double(b)) / double(gamma)));
  return t % 2 ? t : t + 1;
}

std::vector<LayerSlot> generator_layout(const GeneratorSpec &spec) {
  spec.validate();
  using U = std::uint32_t;
  std::vector<LayerSlot> out;
  auto conv = [&](const std::string &name, int oc, int ic, int k) {
    out.push_back({name, LayerKind::Conv2d, {U(oc), U(ic), U(k), U(k)}});
    out.push_back({name + ".bias", LayerKind::Bias, {U(oc)}});
  };
  auto norm = [&](const std::string &name, int c) {
    if (spec.normalize)
      out.push_back({name, LayerKind::Norm, {2u, U(c)}});
  };
  auto resblock = [&](const std::string &name, int c) {
    conv(name + ".conv1", c, c, 3);
    conv(name + ".conv2", c, c, 3);
    out.push_back({name + ".eca", LayerKind::Eca, {U(eca_kernel_size(c, spec.eca_gamma, spec.eca_b))}});
  };

  for (int i = 0; i < spec.depth; ++i) {
    const std::string p = "enc" + std::to_string(i);
    const int c = spec.channels_at(i);
    conv(p + ".conv", c, i == 0 ? spec.image_channels : c, 3);
    norm(p + ".norm", c);
    resblock(p + ".rb", c);
    conv(p + ".down", spec.channels_at(i + 1), c, 3);
  }
  const int cb = spec.channels_at(spec.depth);
  conv("mid.conv", cb, cb, 3);
  norm("mid.norm", cb);
  resblock("mid.rb", cb);
  for (int i = spec.depth - 1; i >= 0; --i) {
    const std::string p = "dec" + std::to_string(i);
    const int c = spec.channels_at(i);
    conv(p + ".up", c, spec.channels_at(i + 1), 3);
    conv(p + ".conv", c, 2 * c, 3);
    norm(p + ".norm", c);
    resblock(p + ".rb", c);
  }
  conv("out.conv", spec.image_channels, spec.channels_at(0), 1);
  return out;
}

WeightManifest zero_weights(const GeneratorSpec &spec) {
  WeightManifest m;
  m.arch_id = spec.arch_id();
  for (auto &slot : generator_layout(spec)) {
    LayerRecord r{slot.name, slot.kind, slot.shape, {}, std::nullopt};
    r.data.assign(r.element_count(), 0.0f);
    if (r.kind == LayerKind::Norm)
      std::fill(r.data.begin(), r.data.begin() + std::ptrdiff_t(r.shape[1]), 1.0f);
    m.records.push_back(std::move(r));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Codec

namespace {

class Writer {
public:
  template <class T> void put(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    bytes.insert(bytes.end(), b, b + sizeof(T));
  }
  void put_string(const std::string &s) {
    put(std::uint32_t(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <class T> T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char *>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void get_floats(std::vector<float> &out, std::size_t n) {
    if (n > (bytes_.size() - pos_) / sizeof(float))
      truncated();
    out.resize(n);
    std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  bool at_end() const { return pos_ == bytes_.size(); }

private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_)
      truncated();
  }
  [[noreturn]] static void truncated() { fail(ErrorCode::CorruptData, "weight file is truncated"); }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_weights(const WeightManifest &m) {
  Writer w;
  for (char c : WeightManifest::kMagic)
    w.put(c);
  w.put(m.version);
  w.put_string(m.arch_id);
  w.put(std::uint32_t(m.records.size()));
  for (const auto &r : m.records) {
    if (r.data.size() != r.element_count())
      fail(ErrorCode::ShapeMismatch, "layer " + r.name + ": payload does not match shape");
    w.put_string(r.name);
    w.put(std::uint8_t(r.kind));
    w.put(std::uint8_t(r.shape.size()));
    for (auto d : r.shape)
      w.put(d);
    w.put(std::uint8_t(r.sn_sigma ? 1 : 0));
    if (r.sn_sigma)
      w.put(*r.sn_sigma);
    for (float v : r.data)
      w.put(v);
  }
  return std::move(w.bytes);
}

WeightManifest decode_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), WeightManifest::kMagic, 4) != 0)
    fail(ErrorCode::BadMagic, "not an OTRE weight file (bad magic)");
  Reader rd(bytes.subspan(4));
  WeightManifest m;
  m.version = rd.get<std::uint16_t>();
  if (m.version != WeightManifest::kVersion)
    fail(ErrorCode::VersionUnsupported, "unsupported OTRE version " + std::to_string(m.version));
  m.arch_id = rd.get_string();
  const auto count = rd.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerRecord r;
    r.name = rd.get_string();
    const auto kind = rd.get<std::uint8_t>();
    if (kind > std::uint8_t(LayerKind::Bias))
      fail(ErrorCode::CorruptData, "layer " + r.name + ": unknown kind " + std::to_string(kind));
    r.kind = LayerKind(kind);
    const auto rank = rd.get<std::uint8_t>();
    for (int d = 0; d < rank; ++d)
      r.shape.push_back(rd.get<std::uint32_t>());
    const auto has_sigma = rd.get<std::uint8_t>();
    if (has_sigma > 1)
      fail(ErrorCode::CorruptData, "layer " + r.name + ": bad sn_sigma flag");
    if (has_sigma) {
      r.sn_sigma = rd.get<double>();
      if (!(*r.sn_sigma > 0.0) || !std::isfinite(*r.sn_sigma))
        fail(ErrorCode::NonFiniteParam, "layer " + r.name + ": sn_sigma must be positive and finite");
    }
    rd.get_floats(r.data, r.element_count());
    m.records.push_back(std::move(r));
  }
  if (!rd.at_end())
    fail(ErrorCode::CorruptData, "trailing bytes after the last weight record");
  return m;
}

void write_weights(const WeightManifest &m, const std::filesystem::path &path) {
  const auto bytes = encode_weights(m);
  std::ofstream f(path, std::ios::binary);
  if (!f)
    fail(ErrorCode::IoError, "cannot open " + path.string());
  f.write(reinterpret_cast<const char *>(bytes.data()), std::streamsize(bytes.size()));
  if (!f)
    fail(ErrorCode::IoError, "write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Spectral norm

double verify_spectral_norm(std::span<const float> kernel, std::span<const std::uint32_t> shape, double tol,
                            int iters) {
  if (shape.empty())
    fail(ErrorCode::ShapeMismatch, "kernel has no dimensions");
  const std::size_t rows = shape[0];
  std::size_t cols = 1;
  for (std::size_t d = 1; d < shape.size(); ++d)
    cols *= shape[d];
  if (rows * cols != kernel.size() || rows == 0 || cols == 0)
    fail(ErrorCode::ShapeMismatch, "kernel payload does not match its shape");

  // Gram matrix of the smaller side; its top eigenvalue is sigma^2.
  const bool by_rows = rows <= cols;
  const std::size_t m = by_rows ? rows : cols, n = by_rows ? cols : rows;
  auto w = [&](std::size_t i, std::size_t k) {
    return double(by_rows ? kernel[i * cols + k] : kernel[k * cols + i]);
  };
  std::vector<double> gram(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        s += w(i, k) * w(j, k);
      gram[i * m + j] = gram[j * m + i] = s;
    }
  double trace = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    trace += gram[i * m + i];
  if (trace == 0.0)
    return 0.0;

  auto apply = [m](const std::vector<double> &a, const std::vector<double> &v) {
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        out[i] += a[i * m + j] * v[j];
    return out;
  };
  auto normalize = [](std::vector<double> &v) {
    double s = 0.0;
    for (double e : v)
      s += e * e;
    s = std::sqrt(s);
    if (s > 0.0)
      for (double &e : v)
        e /= s;
    return s;
  };
  auto rayleigh = [&](const std::vector<double> &v) {
    const auto gv = apply(gram, v);
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      s += v[i] * gv[i];
    return s;
  };

  std::vector<double> v(m, 1.0);
  normalize(v);
  if (auto gv = apply(gram, v); normalize(gv) <= 1e-12 * trace) {
    // All-ones is orthogonal to the range; start from the heaviest row.
    std::size_t best = 0;
    for (std::size_t i = 1; i < m; ++i)
      if (gram[i * m + i] > gram[best * m + best])
        best = i;
    v.assign(gram.begin() + std::ptrdiff_t(best * m), gram.begin() + std::ptrdiff_t(best * m + m));
    normalize(v);
  }

  // Power iteration where round k multiplies by gram^(2^k): the iteration
  // matrix is squared (and rescaled) after every round.
  std::vector<double> power = gram;
  double lambda = rayleigh(v);
  for (int it = 0; it < iters; ++it) {
    v = apply(power, v);
    if (normalize(v) == 0.0)
      break;
    const double next = rayleigh(v);
    const bool settled = std::abs(next - lambda) <= tol * 1e-3 * next;
    lambda = next;
    if (settled)
      break;
    std::vector<double> sq(m * m, 0.0);
    double peak = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < m; ++k) {
        const double a = power[i * m + k];
        if (a == 0.0)
          continue;
        for (std::size_t j = 0; j < m; ++j)
          sq[i * m + j] += a * power[k * m + j];
      }
    for (double e : sq)
      peak = std::max(peak, std::abs(e));
    if (peak == 0.0)
      break;
    for (double &e : sq)
      e /= peak;
    power = std::move(sq);
  }
  return std::sqrt(std::max(lambda, 0.0));
}

// ---------------------------------------------------------------------------
// Loading

GeneratorSpec validate_manifest(const WeightManifest &m, const LoadOptions &opts) {
  const GeneratorSpec spec = GeneratorSpec::from_arch_id(m.arch_id);
  const auto layout = generator_layout(spec);
  if (layout.size() != m.records.size())
    fail(ErrorCode::ShapeMismatch, "arch " + m.arch_id + " expects " + std::to_string(layout.size()) +
                                     " records, file has " + std::to_string(m.records.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto &slot = layout[i];
    const auto &r = m.records[i];
    if (r.name != slot.name || r.kind != slot.kind || r.shape != slot.shape)
      fail(ErrorCode::ShapeMismatch, "layer " + (r.name.empty() ? slot.name : r.name) + ": expected " + slot.name +
                                       " (" + layer_kind_name(slot.kind) + ") with a different shape or kind");
    if (r.data.size() != r.element_count())
      fail(ErrorCode::ShapeMismatch, "layer " + r.name + ": payload does not match shape");
    if (!std::all_of(r.data.begin(), r.data.end(), [](float v) { return std::isfinite(v); }))
      fail(ErrorCode::NonFiniteParam, "layer " + r.name + ": non-finite parameter");
  }
  if (opts.check_spectral_norm)
    for (const auto &r : m.records) {
      if (r.kind != LayerKind::Conv2d)
        continue;
      const double sigma = verify_spectral_norm(r.data, r.shape, opts.sn_tol, opts.sn_iters);
      if (sigma > 1.0 + opts.sn_tol) {
        std::ostringstream os;
        os << "layer " << r.name << ": spectral norm " << sigma << " exceeds 1 + " << opts.sn_tol;
        fail(ErrorCode::LipschitzViolation, os.str());
      }
    }
  return spec;
}

LoadedWeights load_weights(const std::filesystem::path &path, const LoadOptions &opts) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    fail(ErrorCode::MissingFile, "cannot open weight file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  WeightManifest m = decode_weights(bytes);
  GeneratorSpec spec = validate_manifest(m, opts);
  return {spec, std::move(m)};
}

} // namespace otre
