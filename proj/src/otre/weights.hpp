#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace otre {

enum class LayerKind : std::uint8_t { Conv2d = 0, Eca = 1, Norm = 2, Bias = 3 };

const char *layer_kind_name(LayerKind kind) noexcept;

struct LayerRecord {
  std::string name;
  LayerKind kind = LayerKind::Conv2d;
  std::vector<std::uint32_t> shape;
  std::vector<float> data;          ///< row-major
  std::optional<double> sn_sigma;   ///< top singular value before export normalization

  std::size_t element_count() const noexcept;
  bool operator==(const LayerRecord &) const = default;
};

/// In-memory form of an OTRE weight file.
struct WeightManifest {
  static constexpr char kMagic[4] = {'O', 'T', 'R', 'E'};
  static constexpr std::uint16_t kVersion = 1;

  std::uint16_t version = kVersion;
  std::string arch_id;
  std::vector<LayerRecord> records;

  const LayerRecord *find(std::string_view name) const noexcept;
  bool operator==(const WeightManifest &) const = default;
};

/// Architecture of the UNet enhancer. `arch_id()` encodes every field so that
/// a weight file fully determines the network it belongs to.
struct GeneratorSpec {
  int depth = 4;
  int base_channels = 32;
  int eca_gamma = 2;
  int eca_b = 1;
  bool residual_output = true;
  int image_channels = 3;
  bool normalize = true;

  void validate() const;
  int channels_at(int stage) const { return base_channels << stage; }

  /// "unet-eca-d<depth>-c<base>" followed by optional tokens for non-default
  /// fields: "i<channels>", "g<gamma>b<b>", "nonorm", "direct".
  std::string arch_id() const;
  static GeneratorSpec from_arch_id(const std::string &id);

  bool operator==(const GeneratorSpec &) const = default;
};

/// ECA kernel length for `channels`: t = |(log2(C) + b) / gamma|, bumped to odd.
int eca_kernel_size(int channels, int gamma, int b);

/// One expected record of a generator: name, kind and shape.
struct LayerSlot {
  std::string name;
  LayerKind kind;
  std::vector<std::uint32_t> shape;
};

/// The exact record sequence a generator with `spec` stores, in file order.
std::vector<LayerSlot> generator_layout(const GeneratorSpec &spec);

/// A manifest whose records follow `spec` with every parameter zero; norm
/// records get unit scale. With residual_output this generator is the identity.
WeightManifest zero_weights(const GeneratorSpec &spec);

std::vector<std::uint8_t> encode_weights(const WeightManifest &m);
WeightManifest decode_weights(std::span<const std::uint8_t> bytes);
void write_weights(const WeightManifest &m, const std::filesystem::path &path);

/// Power-iteration estimate of the top singular value of a conv kernel viewed
/// as an out x (in*kh*kw) matrix. Iterates on the Gram matrix of the smaller
/// side, squaring the iteration matrix each round, from the normalized
/// all-ones vector (or the heaviest row when all-ones is orthogonal to the
/// range). Stops once the eigenvalue estimate changes by less than
/// tol * 1e-3 relative, or after `iters` rounds.
double verify_spectral_norm(std::span<const float> kernel, std::span<const std::uint32_t> shape, double tol = 1e-3,
                            int iters = 50);

struct LoadOptions {
  bool check_spectral_norm = true;
  double sn_tol = 1e-3;
  int sn_iters = 50;
};

/// Checks a decoded manifest against its arch_id: record sequence, finiteness
/// and (optionally) every conv layer's spectral norm <= 1 + sn_tol.
GeneratorSpec validate_manifest(const WeightManifest &m, const LoadOptions &opts = {});

struct LoadedWeights {
  GeneratorSpec spec;
  WeightManifest manifest;
};

LoadedWeights load_weights(const std::filesystem::path &path, const LoadOptions &opts = {});

} // namespace otre
