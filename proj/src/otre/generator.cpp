#include "otre/generator.hpp"

#include "otre/error.hpp"

#include <algorithm>

namespace otre {

Generator::Generator(GeneratorSpec spec, WeightManifest weights)
  : spec_(spec), weights_(std::make_shared<const WeightManifest>(std::move(weights))) {
  spec_.validate();
  if (weights_->arch_id != spec_.arch_id())
    fail(ErrorCode::ShapeMismatch, "weights are for " + weights_->arch_id + ", not " + spec_.arch_id());
  validate_manifest(*weights_, LoadOptions{.check_spectral_norm = false});
  bind();
}

Generator Generator::load(const std::filesystem::path &path, const LoadOptions &opts) {
  auto loaded = load_weights(path, opts);
  return Generator(loaded.spec, std::move(loaded.manifest));
}

Generator Generator::identity(int image_channels, int depth, int base_channels) {
  GeneratorSpec s;
  s.image_channels = image_channels;
  s.depth = depth;
  s.base_channels = base_channels;
  s.residual_output = true;
  return Generator(s, zero_weights(s));
}

const LayerRecord &Generator::record(const std::string &name) const {
  const LayerRecord *r = weights_->find(name);
  if (!r)
    fail(ErrorCode::ShapeMismatch, "missing layer " + name);
  return *r;
}

Generator::Conv Generator::conv(const std::string &name) const {
  const auto &k = record(name);
  return {ConvKernel::from_shape(k.data, k.shape), record(name + ".bias").data};
}

Generator::ResBlock Generator::resblock(const std::string &name) const {
  return {conv(name + ".conv1"), conv(name + ".conv2"), record(name + ".eca").data};
}

void Generator::bind() {
  auto norm = [&](const std::string &name) {
    return spec_.normalize ? std::span<const float>(record(name).data) : std::span<const float>();
  };
  for (int i = 0; i < spec_.depth; ++i) {
    const std::string p = "enc" + std::to_string(i);
    enc_.push_back({conv(p + ".conv"), norm(p + ".norm"), resblock(p + ".rb"), conv(p + ".down")});
  }
  mid_ = {conv("mid.conv"), norm("mid.norm"), resblock("mid.rb"), {}};
  dec_.resize(std::size_t(spec_.depth));
  for (int i = spec_.depth - 1; i >= 0; --i) {
    const std::string p = "dec" + std::to_string(i);
    dec_[std::size_t(i)] = {conv(p + ".conv"), norm(p + ".norm"), resblock(p + ".rb"), conv(p + ".up")};
  }
  out_ = conv("out.conv");
}

FeatureMap Generator::conv_block(const FeatureMap &x, const Conv &c, std::span<const float> norm) const {
  FeatureMap h = conv2d_forward(x, c.kernel, c.bias, 1, 1);
  if (spec_.normalize)
    instance_norm_inplace(h, norm);
  leaky_relu_inplace(h);
  return h;
}

FeatureMap Generator::residual_block(const FeatureMap &x, const ResBlock &rb) {
  FeatureMap r = conv2d_forward(x, rb.conv1.kernel, rb.conv1.bias, 1, 1);
  leaky_relu_inplace(r);
  r = conv2d_forward(r, rb.conv2.kernel, rb.conv2.bias, 1, 1);
  r = eca_forward(r, rb.eca);
  for (std::size_t i = 0; i < r.data.size(); ++i)
    r.data[i] = x.data[i] + r.data[i];
  return r;
}

ImageTensor Generator::forward(const ImageTensor &x) const {
  if (x.channels() != spec_.image_channels)
    fail(ErrorCode::ShapeMismatch, "generator expects " + std::to_string(spec_.image_channels) +
                                     "-channel images, got " + std::to_string(x.channels()));
  const int mult = 1 << spec_.depth;
  if (x.height() % mult != 0 || x.width() % mult != 0)
    fail(ErrorCode::ShapeMismatch, "generator input sides must be divisible by " + std::to_string(mult));

  FeatureMap h(x.channels(), x.height(), x.width());
  h.data = x.data();

  std::vector<FeatureMap> skips;
  for (const Stage &s : enc_) {
    h = conv_block(h, s.conv, s.norm);
    h = residual_block(h, s.rb);
    skips.push_back(h);
    h = conv2d_forward(h, s.resample.kernel, s.resample.bias, 2, 1);
    leaky_relu_inplace(h);
  }
  h = conv_block(h, mid_.conv, mid_.norm);
  h = residual_block(h, mid_.rb);
  for (int i = spec_.depth - 1; i >= 0; --i) {
    const Stage &s = dec_[std::size_t(i)];
    h = conv2d_forward(upsample_nearest2x(h), s.resample.kernel, s.resample.bias, 1, 1);
    leaky_relu_inplace(h);
    h = concat_channels(h, skips[std::size_t(i)]);
    h = conv_block(h, s.conv, s.norm);
    h = residual_block(h, s.rb);
  }
  h = conv2d_forward(h, out_.kernel, out_.bias, 1, 0);

  ImageTensor out(x.channels(), x.height(), x.width());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = spec_.residual_output ? x.data()[i] + h.data[i] : h.data[i];
    out.data()[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

} // namespace otre
