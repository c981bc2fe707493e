#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace otre {

/// Channels x height x width activations of the forward pass.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, double fill = 0.0)
    : channels(c), height(h), width(w), data(std::size_t(c) * std::size_t(h) * std::size_t(w), fill) {}

  std::size_t plane_size() const noexcept { return std::size_t(height) * std::size_t(width); }
  double &at(int c, int y, int x) noexcept { return data[(std::size_t(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const noexcept { return data[(std::size_t(c) * height + y) * width + x]; }
};

/// Non-owning view of a row-major out x in x kh x kw kernel.
struct ConvKernel {
  std::span<const float> weights;
  int out_channels = 0;
  int in_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;

  static ConvKernel from_shape(std::span<const float> w, std::span<const std::uint32_t> shape);
};

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kNormEpsilon = 1e-5;

/// Zero-padded cross-correlation. Every output starts at its bias and then
/// accumulates taps in (in-channel, ky, kx) order; out-of-range taps are skipped.
FeatureMap conv2d_forward(const FeatureMap &input, const ConvKernel &kernel, std::span<const float> bias, int stride,
                          int padding);

/// Efficient channel attention: global average pool, zero-padded 1-D
/// correlation across channels, logistic sigmoid, channel-wise rescale.
FeatureMap eca_forward(const FeatureMap &input, std::span<const float> kernel1d);

/// Per-sample, per-channel normalization with affine parameters laid out as
/// [scale(C), shift(C)].
void instance_norm_inplace(FeatureMap &x, std::span<const float> affine);

void leaky_relu_inplace(FeatureMap &x, double slope = kLeakySlope);

FeatureMap upsample_nearest2x(const FeatureMap &x);

FeatureMap concat_channels(const FeatureMap &a, const FeatureMap &b);

} // namespace otre
