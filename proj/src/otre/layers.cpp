#include "otre/layers.hpp"

#include "otre/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace otre {

ConvKernel ConvKernel::from_shape(std::span<const float> w, std::span<const std::uint32_t> shape) {
  if (shape.size() != 4)
    fail(ErrorCode::ShapeMismatch, "conv kernel must be rank 4");
  ConvKernel k{w, int(shape[0]), int(shape[1]), int(shape[2]), int(shape[3])};
  if (std::size_t(k.out_channels) * k.in_channels * k.kernel_h * k.kernel_w != w.size())
    fail(ErrorCode::ShapeMismatch, "conv kernel payload does not match its shape");
  return k;
}

FeatureMap conv2d_forward(const FeatureMap &input, const ConvKernel &kernel, std::span<const float> bias, int stride,
                          int padding) {
  if (stride < 1 || padding < 0)
    fail(ErrorCode::InvalidArgument, "conv2d stride must be >= 1 and padding >= 0");
  if (kernel.in_channels != input.channels)
    fail(ErrorCode::ShapeMismatch, "conv2d: kernel expects " + std::to_string(kernel.in_channels) +
                                     " input channels, got " + std::to_string(input.channels));
  if (!bias.empty() && int(bias.size()) != kernel.out_channels)
    fail(ErrorCode::ShapeMismatch, "conv2d: bias length does not match output channels");
  if (std::size_t(kernel.out_channels) * kernel.in_channels * kernel.kernel_h * kernel.kernel_w !=
      kernel.weights.size())
    fail(ErrorCode::ShapeMismatch, "conv2d: kernel payload does not match its shape");
  const int oh = (input.height + 2 * padding - kernel.kernel_h) / stride + 1;
  const int ow = (input.width + 2 * padding - kernel.kernel_w) / stride + 1;
  if (input.height + 2 * padding < kernel.kernel_h || input.width + 2 * padding < kernel.kernel_w)
    fail(ErrorCode::ShapeMismatch, "conv2d: kernel larger than padded input");

  FeatureMap out(kernel.out_channels, oh, ow);
  const std::size_t ksz = std::size_t(kernel.kernel_h) * kernel.kernel_w;
  for (int oc = 0; oc < kernel.out_channels; ++oc) {
    double *dst = out.data.data() + std::size_t(oc) * out.plane_size();
    std::fill(dst, dst + out.plane_size(), bias.empty() ? 0.0 : double(bias[std::size_t(oc)]));
    for (int ic = 0; ic < kernel.in_channels; ++ic) {
      const double *src = input.data.data() + std::size_t(ic) * input.plane_size();
      const float *w = kernel.weights.data() + (std::size_t(oc) * kernel.in_channels + ic) * ksz;
      for (int ky = 0; ky < kernel.kernel_h; ++ky)
        for (int kx = 0; kx < kernel.kernel_w; ++kx) {
          const double wv = w[ky * kernel.kernel_w + kx];
          // Output rows/cols whose tap lands inside the input.
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - padding;
            if (iy < 0 || iy >= input.height)
              continue;
            const double *srow = src + std::size_t(iy) * input.width;
            double *drow = dst + std::size_t(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kx - padding;
              if (ix < 0 || ix >= input.width)
                continue;
              drow[ox] += wv * srow[ix];
            }
          }
        }
    }
  }
  return out;
}

FeatureMap eca_forward(const FeatureMap &input, std::span<const float> kernel1d) {
  const int k = int(kernel1d.size());
  if (k < 1 || k % 2 == 0)
    fail(ErrorCode::ShapeMismatch, "eca: kernel length must be odd");
  const int r = k / 2;
  const std::size_t n = input.plane_size();
  std::vector<double> pooled(std::size_t(input.channels));
  for (int c = 0; c < input.channels; ++c) {
    const double *p = input.data.data() + std::size_t(c) * n;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += p[i];
    pooled[std::size_t(c)] = s / double(n);
  }
  FeatureMap out = input;
  for (int c = 0; c < input.channels; ++c) {
    double z = 0.0;
    for (int j = 0; j < k; ++j) {
      const int src = c + j - r;
      if (src < 0 || src >= input.channels)
        continue;
      z += double(kernel1d[std::size_t(j)]) * pooled[std::size_t(src)];
    }
    const double att = 1.0 / (1.0 + std::exp(-z));
    double *p = out.data.data() + std::size_t(c) * n;
    for (std::size_t i = 0; i < n; ++i)
      p[i] *= att;
  }
  return out;
}

void instance_norm_inplace(FeatureMap &x, std::span<const float> affine) {
  if (affine.size() != 2 * std::size_t(x.channels))
    fail(ErrorCode::ShapeMismatch, "instance norm: affine parameters do not match channels");
  const std::size_t n = x.plane_size();
  for (int c = 0; c < x.channels; ++c) {
    double *p = x.data.data() + std::size_t(c) * n;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += p[i];
    const double mean = s / double(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      v += (p[i] - mean) * (p[i] - mean);
    const double inv = 1.0 / std::sqrt(v / double(n) + kNormEpsilon);
    const double scale = affine[std::size_t(c)];
    const double shift = affine[std::size_t(x.channels + c)];
    for (std::size_t i = 0; i < n; ++i)
      p[i] = scale * ((p[i] - mean) * inv) + shift;
  }
}

void leaky_relu_inplace(FeatureMap &x, double slope) {
  for (double &v : x.data)
    if (v < 0.0)
      v *= slope;
}

FeatureMap upsample_nearest2x(const FeatureMap &x) {
  FeatureMap out(x.channels, 2 * x.height, 2 * x.width);
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int xx = 0; xx < out.width; ++xx)
        out.at(c, y, xx) = x.at(c, y / 2, xx / 2);
  return out;
}

FeatureMap concat_channels(const FeatureMap &a, const FeatureMap &b) {
  if (a.height != b.height || a.width != b.width)
    fail(ErrorCode::ShapeMismatch, "concat: spatial sizes differ");
  FeatureMap out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + std::ptrdiff_t(a.data.size()));
  return out;
}

} // namespace otre
