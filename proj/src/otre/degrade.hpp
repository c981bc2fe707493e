#pragma once

#include "otre/image.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace otre {

/// Seeded recipe for synthesizing a low-quality fundus image. Stages run in a
/// fixed order: photometric (contrast/brightness) -> radial shading -> Gaussian
/// blur -> additive Gaussian noise -> clamp. Neutral values skip a stage.
struct DegradeParams {
  double blur_sigma = 0.0;
  double illum_strength = 0.0;  ///< shading depth, mask = 1 - strength * r^2
  double brightness_shift = 0.0;
  double contrast_scale = 1.0;
  double noise_std = 0.0;
  double center_jitter = 0.1;   ///< max shading-center offset as a fraction of each side
  std::uint64_t seed = 0;

  void validate() const;
};

ImageTensor degrade(const ImageTensor &x, const DegradeParams &p);

/// Separable Gaussian blur with edge replication, radius ceil(3 sigma).
ImageTensor gaussian_blur(const ImageTensor &x, double sigma);

/// FNV-1a 64 over the 8-bit quantized samples; stable across platforms.
std::uint64_t image_checksum(const ImageTensor &img);

enum class QualityLabel { Good, Usable, Reject, SyntheticLow };

const char *quality_label_name(QualityLabel l) noexcept;
QualityLabel parse_quality_label(const std::string &s);

struct ManifestEntry {
  std::filesystem::path path;
  QualityLabel label = QualityLabel::Good;
  std::optional<int> grade;
  std::optional<std::filesystem::path> clean_path;

  bool operator==(const ManifestEntry &) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> warnings; ///< not serialized

  /// Line-delimited JSON, one entry per line.
  void save(const std::filesystem::path &path) const;
  /// Relative paths in the file are resolved against the file's directory.
  static DatasetManifest load(const std::filesystem::path &path);
};

bool is_supported_image(const std::filesystem::path &p);

/// Recursively collects PNG/JPEG files under `root`, sorted by path. An
/// optional `filename,grade` CSV attaches grades by file name; images without
/// a row and rows without an image are recorded as warnings.
DatasetManifest build_manifest(const std::filesystem::path &root,
                               const std::optional<std::filesystem::path> &labels_csv = std::nullopt,
                               QualityLabel label = QualityLabel::Good);

} // namespace otre
