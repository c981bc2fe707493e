#include "otre/degrade.hpp"

#include "otre/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace otre {

void DegradeParams::validate() const {
  auto check = [](bool ok, const char *what) {
    if (!ok)
      fail(ErrorCode::InvalidArgument, what);
  };
  check(blur_sigma >= 0.0 && std::isfinite(blur_sigma), "blur_sigma must be >= 0");
  check(illum_strength >= 0.0 && illum_strength <= 1.0, "illum_strength must be in [0, 1]");
  check(brightness_shift >= -0.5 && brightness_shift <= 0.5, "brightness_shift must be in [-0.5, 0.5]");
  check(contrast_scale > 0.0 && contrast_scale <= 2.0, "contrast_scale must be in (0, 2]");
  check(noise_std >= 0.0 && std::isfinite(noise_std), "noise_std must be >= 0");
  check(center_jitter >= 0.0 && center_jitter <= 0.5, "center_jitter must be in [0, 0.5]");
}

namespace {

// Draws from mt19937_64 without the implementation-defined std distributions.
class PortableRng {
public:
  explicit PortableRng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do
      u1 = uniform();
    while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace

ImageTensor gaussian_blur(const ImageTensor &x, double sigma) {
  if (!(sigma > 0.0))
    return x;
  const int r = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> taps(std::size_t(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    taps[std::size_t(i + r)] = std::exp(-double(i * i) / (2.0 * sigma * sigma));
    sum += taps[std::size_t(i + r)];
  }
  for (double &t : taps)
    t /= sum;
  const int h = x.height(), w = x.width();
  ImageTensor tmp(x.channels(), h, w), out(x.channels(), h, w);
  for (int c = 0; c < x.channels(); ++c) {
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i)
          s += taps[std::size_t(i + r)] * x.at(c, yy, std::clamp(xx + i, 0, w - 1));
        tmp.at(c, yy, xx) = s;
      }
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i)
          s += taps[std::size_t(i + r)] * tmp.at(c, std::clamp(yy + i, 0, h - 1), xx);
        out.at(c, yy, xx) = s;
      }
  }
  return out;
}

ImageTensor degrade(const ImageTensor &x, const DegradeParams &p) {
  p.validate();
  PortableRng rng(p.seed);
  // The shading center is always drawn first so the noise stream does not
  // depend on which stages are active.
  const double jy = (2.0 * rng.uniform() - 1.0) * p.center_jitter;
  const double jx = (2.0 * rng.uniform() - 1.0) * p.center_jitter;

  ImageTensor out = x;
  if (p.contrast_scale != 1.0 || p.brightness_shift != 0.0)
    for (double &v : out.data())
      v = std::clamp(p.contrast_scale * (v - 0.5) + 0.5 + p.brightness_shift, 0.0, 1.0);

  if (p.illum_strength != 0.0) {
    const double h = out.height(), w = out.width();
    const double cy = h * (0.5 + jy), cx = w * (0.5 + jx);
    const double radius2 = 0.25 * (h * h + w * w);
    for (int yy = 0; yy < out.height(); ++yy)
      for (int xx = 0; xx < out.width(); ++xx) {
        const double dy = yy + 0.5 - cy, dx = xx + 0.5 - cx;
        const double mask = std::max(0.0, 1.0 - p.illum_strength * (dy * dy + dx * dx) / radius2);
        for (int c = 0; c < out.channels(); ++c)
          out.at(c, yy, xx) *= mask;
      }
  }

  if (p.blur_sigma > 0.0)
    out = gaussian_blur(out, p.blur_sigma);

  if (p.noise_std > 0.0)
    for (double &v : out.data())
      v += p.noise_std * rng.normal();

  out.clamp01();
  return out;
}

std::uint64_t image_checksum(const ImageTensor &img) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint8_t b) {
    h ^= b;
    h *= 1099511628211ull;
  };
  for (int v : {img.channels(), img.height(), img.width()})
    for (int s = 0; s < 32; s += 8)
      mix(std::uint8_t((unsigned(v) >> s) & 0xff));
  for (auto b : quantize_8bit(img))
    mix(b);
  return h;
}

// ---------------------------------------------------------------------------
// Manifests

const char *quality_label_name(QualityLabel l) noexcept {
  switch (l) {
  case QualityLabel::Good: return "good";
  case QualityLabel::Usable: return "usable";
  case QualityLabel::Reject: return "reject";
  case QualityLabel::SyntheticLow: return "synthetic-low";
  }
  return "good";
}

QualityLabel parse_quality_label(const std::string &s) {
  for (auto l : {QualityLabel::Good, QualityLabel::Usable, QualityLabel::Reject, QualityLabel::SyntheticLow})
    if (s == quality_label_name(l))
      return l;
  fail(ErrorCode::InvalidArgument, "unknown quality label '" + s + "'");
}

bool is_supported_image(const std::filesystem::path &p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

void DatasetManifest::save(const std::filesystem::path &path) const {
  std::ofstream f(path);
  if (!f)
    fail(ErrorCode::IoError, "cannot open " + path.string());
  for (const auto &e : entries) {
    nlohmann::ordered_json j;
    j["path"] = e.path.string();
    j["label"] = quality_label_name(e.label);
    if (e.grade)
      j["grade"] = *e.grade;
    if (e.clean_path)
      j["clean"] = e.clean_path->string();
    f << j.dump() << '\n';
  }
  if (!f)
    fail(ErrorCode::IoError, "write failed: " + path.string());
}

DatasetManifest DatasetManifest::load(const std::filesystem::path &path) {
  std::ifstream f(path);
  if (!f)
    fail(ErrorCode::MissingFile, "cannot open manifest " + path.string());
  const auto base = path.parent_path();
  auto resolve = [&](const std::string &s) {
    std::filesystem::path p(s);
    return p.is_absolute() ? p : base / p;
  };
  DatasetManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.path = resolve(j.at("path").get<std::string>());
      e.label = parse_quality_label(j.value("label", std::string("good")));
      if (j.contains("grade"))
        e.grade = j.at("grade").get<int>();
      if (j.contains("clean"))
        e.clean_path = resolve(j.at("clean").get<std::string>());
      m.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception &ex) {
      fail(ErrorCode::CorruptData, path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    } catch (const Error &ex) {
      fail(ErrorCode::CorruptData, path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return m;
}

namespace {

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos)
    return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::map<std::string, std::optional<int>> read_labels(const std::filesystem::path &csv) {
  std::ifstream f(csv);
  if (!f)
    fail(ErrorCode::MissingFile, "cannot open labels file " + csv.string());
  auto malformed = [&](int line, const std::string &why) {
    fail(ErrorCode::MalformedLabels, csv.string() + ":" + std::to_string(line) + ": " + why);
  };
  std::map<std::string, std::optional<int>> out;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(f, line)) {
    ++lineno;
    if (trim(line).empty())
      continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');)
      cols.push_back(trim(c));
    if (!line.empty() && line.back() == ',')
      cols.emplace_back();
    if (!header) {
      if (cols.size() != 2 || cols[0] != "filename" || cols[1] != "grade")
        malformed(lineno, "expected header 'filename,grade'");
      header = true;
      continue;
    }
    if (cols.size() != 2 || cols[0].empty())
      malformed(lineno, "expected 'filename,grade'");
    std::optional<int> grade;
    if (!cols[1].empty()) {
      std::size_t used = 0;
      try {
        grade = std::stoi(cols[1], &used);
      } catch (const std::exception &) {
        used = 0;
      }
      if (used != cols[1].size() || !grade || *grade < 0)
        malformed(lineno, "grade '" + cols[1] + "' is not a non-negative integer");
    }
    if (!out.emplace(cols[0], grade).second)
      malformed(lineno, "duplicate row for '" + cols[0] + "'");
  }
  if (!header)
    malformed(lineno, "missing header 'filename,grade'");
  return out;
}

} // namespace

DatasetManifest build_manifest(const std::filesystem::path &root, const std::optional<std::filesystem::path> &labels_csv,
                               QualityLabel label) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec))
    fail(ErrorCode::MissingDir, "no such directory: " + root.string());
  std::map<std::string, std::optional<int>> labels;
  if (labels_csv)
    labels = read_labels(*labels_csv);

  std::vector<std::filesystem::path> files;
  for (const auto &de : std::filesystem::recursive_directory_iterator(root))
    if (de.is_regular_file() && is_supported_image(de.path()))
      files.push_back(de.path());
  std::sort(files.begin(), files.end());

  DatasetManifest m;
  std::set<std::string> seen;
  for (const auto &f : files) {
    ManifestEntry e{f, label, std::nullopt, std::nullopt};
    const std::string name = f.filename().string();
    if (labels_csv) {
      if (auto it = labels.find(name); it != labels.end()) {
        e.grade = it->second;
        seen.insert(name);
      } else {
        m.warnings.push_back("no label row for " + name);
      }
    }
    m.entries.push_back(std::move(e));
  }
  for (const auto &[name, grade] : labels)
    if (!seen.count(name))
      m.warnings.push_back("label row for missing image " + name);
  return m;
}

} // namespace otre
