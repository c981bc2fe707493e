#include "otre/metrics.hpp"

#include "otre/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace otre {

namespace {

struct Plane {
  int h = 0;
  int w = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(int h_, int w_, double fill = 0.0) : h(h_), w(w_), v(std::size_t(h_) * std::size_t(w_), fill) {}
  double &operator()(int y, int x) { return v[std::size_t(y) * std::size_t(w) + std::size_t(x)]; }
  double operator()(int y, int x) const { return v[std::size_t(y) * std::size_t(w) + std::size_t(x)]; }
};

Plane plane_of(const ImageTensor &img, int c) {
  Plane p(img.height(), img.width());
  auto src = img.plane(c);
  std::copy(src.begin(), src.end(), p.v.begin());
  return p;
}

Plane multiply(const Plane &a, const Plane &b) {
  Plane out(a.h, a.w);
  for (std::size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = a.v[i] * b.v[i];
  return out;
}

// Valid-region separable correlation with symmetric taps.
Plane filter_valid(const Plane &in, const std::vector<double> &taps) {
  const int k = int(taps.size());
  const int ho = in.h - k + 1;
  const int wo = in.w - k + 1;
  Plane tmp(in.h, wo);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < wo; ++x) {
      double s = 0.0;
      for (int j = 0; j < k; ++j)
        s += taps[std::size_t(j)] * in(y, x + j);
      tmp(y, x) = s;
    }
  Plane out(ho, wo);
  for (int y = 0; y < ho; ++y)
    for (int x = 0; x < wo; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i)
        s += taps[std::size_t(i)] * tmp(y + i, x);
      out(y, x) = s;
    }
  return out;
}

// Adjoint of filter_valid: scatters an output-sized gradient back to input size.
Plane filter_valid_adjoint(const Plane &g, const std::vector<double> &taps, int h, int w) {
  const int k = int(taps.size());
  Plane tmp(h, g.w);
  for (int y = 0; y < g.h; ++y)
    for (int i = 0; i < k; ++i) {
      const double t = taps[std::size_t(i)];
      for (int x = 0; x < g.w; ++x)
        tmp(y + i, x) += t * g(y, x);
    }
  Plane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < g.w; ++x) {
      const double gv = tmp(y, x);
      for (int j = 0; j < k; ++j)
        out(y, x + j) += taps[std::size_t(j)] * gv;
    }
  return out;
}

Plane pool2(const Plane &in) {
  Plane out(in.h / 2, in.w / 2);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x)
      out(y, x) = 0.25 * (in(2 * y, 2 * x) + in(2 * y, 2 * x + 1) + in(2 * y + 1, 2 * x) + in(2 * y + 1, 2 * x + 1));
  return out;
}

void pool2_adjoint_add(const Plane &g, Plane &fine) {
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      const double q = 0.25 * g(y, x);
      fine(2 * y, 2 * x) += q;
      fine(2 * y, 2 * x + 1) += q;
      fine(2 * y + 1, 2 * x) += q;
      fine(2 * y + 1, 2 * x + 1) += q;
    }
}

int fitting_window(const SsimParams &p, int h, int w) {
  int k = std::min({p.window_size, h, w});
  if (k % 2 == 0)
    --k;
  return std::max(k, 1);
}

// Windowed statistics of one scale, retained for the backward pass.
struct ScaleStats {
  std::vector<double> taps;
  Plane mu_a, mu_b, e_aa, e_bb, e_ab;
};

ScaleStats scale_stats(const Plane &a, const Plane &b, const std::vector<double> &taps) {
  ScaleStats s;
  s.taps = taps;
  s.mu_a = filter_valid(a, taps);
  s.mu_b = filter_valid(b, taps);
  s.e_aa = filter_valid(multiply(a, a), taps);
  s.e_bb = filter_valid(multiply(b, b), taps);
  s.e_ab = filter_valid(multiply(a, b), taps);
  return s;
}

struct MapValue {
  double mean_cs = 0.0;
  double mean_ssim = 0.0;
};

MapValue scale_means(const ScaleStats &s, double c1, double c2) {
  double sum_cs = 0.0, sum_ssim = 0.0;
  const std::size_t n = s.mu_a.v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double ma = s.mu_a.v[i], mb = s.mu_b.v[i];
    const double saa = s.e_aa.v[i] - ma * ma;
    const double sbb = s.e_bb.v[i] - mb * mb;
    const double sab = s.e_ab.v[i] - ma * mb;
    const double cs = (2.0 * sab + c2) / (saa + sbb + c2);
    const double l = (2.0 * (ma * mb) + c1) / (ma * ma + mb * mb + c1);
    sum_cs += cs;
    sum_ssim += l * cs;
  }
  return {sum_cs / double(n), sum_ssim / double(n)};
}

// Gradient of coeff * mean(term) with respect to the scale's `a` plane, where
// term is cs (with_luminance = false) or l * cs.
Plane scale_gradient(const ScaleStats &s, const Plane &a, const Plane &b, double c1, double c2, double coeff,
                     bool with_luminance) {
  const std::size_t n = s.mu_a.v.size();
  const double k = coeff / double(n);
  Plane g_mu(s.mu_a.h, s.mu_a.w), g_eaa(s.mu_a.h, s.mu_a.w), g_eab(s.mu_a.h, s.mu_a.w);
  for (std::size_t i = 0; i < n; ++i) {
    const double ma = s.mu_a.v[i], mb = s.mu_b.v[i];
    const double saa = s.e_aa.v[i] - ma * ma;
    const double sbb = s.e_bb.v[i] - mb * mb;
    const double sab = s.e_ab.v[i] - ma * mb;
    const double num = 2.0 * sab + c2;
    const double den = saa + sbb + c2;
    const double cs = num / den;
    double d_saa = -num / (den * den);
    double d_sab = 2.0 / den;
    double d_mu = 0.0;
    if (with_luminance) {
      const double ln = 2.0 * (ma * mb) + c1;
      const double ld = ma * ma + mb * mb + c1;
      const double l = ln / ld;
      d_mu = cs * (2.0 * mb * ld - ln * 2.0 * ma) / (ld * ld);
      d_saa *= l;
      d_sab *= l;
    }
    d_mu += d_saa * (-2.0 * ma) + d_sab * (-mb);
    g_mu.v[i] = k * d_mu;
    g_eaa.v[i] = k * d_saa;
    g_eab.v[i] = k * d_sab;
  }
  Plane grad = filter_valid_adjoint(g_mu, s.taps, a.h, a.w);
  const Plane t_aa = filter_valid_adjoint(g_eaa, s.taps, a.h, a.w);
  const Plane t_ab = filter_valid_adjoint(g_eab, s.taps, a.h, a.w);
  for (std::size_t i = 0; i < grad.v.size(); ++i)
    grad.v[i] += 2.0 * a.v[i] * t_aa.v[i] + b.v[i] * t_ab.v[i];
  return grad;
}

} // namespace

void SsimParams::validate() const {
  if (window_size < 3 || window_size % 2 == 0)
    fail(ErrorCode::InvalidArgument, "SSIM window size must be odd and >= 3");
  if (!(window_sigma > 0.0) || !(dynamic_range > 0.0) || !(k1 > 0.0) || !(k2 > 0.0))
    fail(ErrorCode::InvalidArgument, "SSIM sigma, constants and dynamic range must be positive");
  if (scale_weights.empty())
    fail(ErrorCode::InvalidArgument, "MS-SSIM needs at least one scale weight");
  double sum = 0.0;
  for (double w : scale_weights) {
    if (!(w > 0.0))
      fail(ErrorCode::InvalidArgument, "MS-SSIM scale weights must be positive");
    sum += w;
  }
  // The published exponents themselves add up to 1.0001.
  if (std::abs(sum - 1.0) > 1e-3)
    fail(ErrorCode::InvalidArgument, "MS-SSIM scale weights must sum to 1");
}

std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> taps(static_cast<std::size_t>(size));
  const int r = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - r;
    taps[std::size_t(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += taps[std::size_t(i)];
  }
  for (double &t : taps)
    t /= sum;
  return taps;
}

double psnr(const ImageTensor &a, const ImageTensor &b) {
  require_same_shape(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    se += d * d;
  }
  const double mse = se / double(a.size());
  if (mse == 0.0)
    return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageTensor &a, const ImageTensor &b, const SsimParams &p) {
  p.validate();
  require_same_shape(a, b, "ssim");
  if (a.height() < p.window_size || a.width() < p.window_size)
    fail(ErrorCode::TooSmall, "ssim needs images of at least " + std::to_string(p.window_size) + " pixels per side");
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  const auto taps = gaussian_taps(p.window_size, p.window_sigma);
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    const ScaleStats s = scale_stats(plane_of(a, c), plane_of(b, c), taps);
    total += scale_means(s, c1, c2).mean_ssim;
  }
  return total / a.channels();
}

int ms_ssim_scale_count(int height, int width, const SsimParams &p) {
  const int side = std::min(height, width);
  if (side < p.window_size)
    fail(ErrorCode::TooSmall, "ms_ssim needs images of at least " + std::to_string(p.window_size) + " pixels per side");
  int scales = 1;
  int d = side;
  while (scales < int(p.scale_weights.size()) && d / 2 >= 2) {
    d /= 2;
    ++scales;
  }
  return scales;
}

MsSsimResult ms_ssim_with_grad(const ImageTensor &a, const ImageTensor &b, const SsimParams &p) {
  p.validate();
  require_same_shape(a, b, "ms_ssim");
  const int scales = ms_ssim_scale_count(a.height(), a.width(), p);
  std::vector<double> weights(p.scale_weights.begin(), p.scale_weights.begin() + scales);
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (scales < int(p.scale_weights.size()))
    for (double &w : weights)
      w /= wsum;

  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);

  MsSsimResult result;
  result.grad = ImageTensor(a.channels(), a.height(), a.width());
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    std::vector<Plane> pa{plane_of(a, c)}, pb{plane_of(b, c)};
    for (int j = 1; j < scales; ++j) {
      pa.push_back(pool2(pa.back()));
      pb.push_back(pool2(pb.back()));
    }
    std::vector<ScaleStats> stats;
    std::vector<double> terms;
    for (int j = 0; j < scales; ++j) {
      const int k = fitting_window(p, pa[std::size_t(j)].h, pa[std::size_t(j)].w);
      stats.push_back(scale_stats(pa[std::size_t(j)], pb[std::size_t(j)], gaussian_taps(k, p.window_sigma)));
      const MapValue m = scale_means(stats.back(), c1, c2);
      terms.push_back(j + 1 < scales ? m.mean_cs : m.mean_ssim);
    }
    double value = 1.0;
    bool clamped = false;
    for (int j = 0; j < scales; ++j) {
      if (terms[std::size_t(j)] <= 0.0)
        clamped = true;
      value *= std::pow(std::max(terms[std::size_t(j)], 0.0), weights[std::size_t(j)]);
    }
    total += value;
    if (clamped)
      continue;

    // Backward from the coarsest scale, folding each scale's gradient into
    // the next finer one through the pooling adjoint.
    Plane carry;
    for (int j = scales - 1; j >= 0; --j) {
      const std::size_t js = std::size_t(j);
      const double coeff = value * weights[js] / terms[js] / a.channels();
      Plane g = scale_gradient(stats[js], pa[js], pb[js], c1, c2, coeff, j + 1 == scales);
      if (j + 1 < scales)
        pool2_adjoint_add(carry, g);
      carry = std::move(g);
    }
    auto dst = result.grad.plane(c);
    std::copy(carry.v.begin(), carry.v.end(), dst.begin());
  }
  result.value = total / a.channels();
  return result;
}

LossResult fidelity_loss(const ImageTensor &x, const ImageTensor &y, const SsimParams &p) {
  MsSsimResult r = ms_ssim_with_grad(x, y, p);
  for (double &g : r.grad.data())
    g = -g;
  return {1.0 - r.value, std::move(r.grad)};
}

} // namespace otre
