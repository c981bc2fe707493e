#pragma once

#include "otre/image.hpp"
#include "otre/layers.hpp"
#include "otre/weights.hpp"

#include <filesystem>
#include <memory>

namespace otre {

/// Anything the refinement solver can use as its enhancement operator.
class Enhancer {
public:
  virtual ~Enhancer() = default;
  virtual ImageTensor enhance(const ImageTensor &x) const = 0;
};

/// UNet enhancer. Immutable after construction; forward() is safe to call
/// from several threads at once.
///
/// Encoder stage i: 3x3 conv -> [instance norm] -> leaky ReLU -> residual
/// ECA block (skip saved) -> stride-2 3x3 conv -> leaky ReLU. The bottleneck
/// repeats conv/norm/activation/residual block. Decoder stage i: nearest 2x
/// upsample -> 3x3 conv -> leaky ReLU -> concat with the skip -> 3x3 conv ->
/// [instance norm] -> leaky ReLU -> residual ECA block. A 1x1 conv maps back to
/// image channels; the result is clamp(x + out) or clamp(out).
class Generator final : public Enhancer {
public:
  Generator(GeneratorSpec spec, WeightManifest weights);

  static Generator load(const std::filesystem::path &path, const LoadOptions &opts = {});
  static Generator identity(int image_channels = 3, int depth = 1, int base_channels = 1);

  const GeneratorSpec &spec() const noexcept { return spec_; }
  const WeightManifest &weights() const noexcept { return *weights_; }

  ImageTensor forward(const ImageTensor &x) const;
  ImageTensor enhance(const ImageTensor &x) const override { return forward(x); }

private:
  struct Conv {
    ConvKernel kernel;
    std::span<const float> bias;
  };
  struct ResBlock {
    Conv conv1, conv2;
    std::span<const float> eca;
  };
  struct Stage {
    Conv conv;
    std::span<const float> norm;
    ResBlock rb;
    Conv resample; // down (encoder) or up (decoder)
  };

  void bind();
  const LayerRecord &record(const std::string &name) const;
  Conv conv(const std::string &name) const;
  ResBlock resblock(const std::string &name) const;
  FeatureMap conv_block(const FeatureMap &x, const Conv &c, std::span<const float> norm) const;
  static FeatureMap residual_block(const FeatureMap &x, const ResBlock &rb);

  GeneratorSpec spec_;
  std::shared_ptr<const WeightManifest> weights_; // spans below point into it
  std::vector<Stage> enc_, dec_;
  Stage mid_;
  Conv out_;
};

} // namespace otre
