#pragma once

#include "otre/image.hpp"

#include <vector>

namespace otre {

/// Gaussian-window SSIM constants. Defaults are the canonical 5-scale MS-SSIM
/// configuration (11x11 window, sigma 1.5, K1 = 0.01, K2 = 0.03).
struct SsimParams {
  int window_size = 11;
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
  std::vector<double> scale_weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

  /// Throws InvalidArgument when the invariants do not hold.
  void validate() const;
};

struct MsSsimResult {
  double value = 0.0;
  ImageTensor grad; ///< d(value)/d(first argument)
};

struct LossResult {
  double value = 0.0;
  ImageTensor grad;
};

inline constexpr double kPsnrCap = 99.0;

/// Peak signal-to-noise ratio for dynamic range 1. Zero MSE returns kPsnrCap.
double psnr(const ImageTensor &a, const ImageTensor &b);

/// Mean of the valid-region Gaussian-windowed SSIM map, averaged over channels.
double ssim(const ImageTensor &a, const ImageTensor &b, const SsimParams &p = {});

/// Number of scales ms_ssim_with_grad uses for a given image side: the largest
/// count (capped by the weight list) whose coarsest scale is at least 2x2.
/// Throws TooSmall when the smaller side is below the window size.
int ms_ssim_scale_count(int height, int width, const SsimParams &p = {});

/// Multi-scale SSIM and its exact gradient with respect to `a`.
///
/// Each scale computes the valid-region SSIM maps, then both images are
/// 2x2 mean pooled (odd trailing rows/columns dropped). Scales finer than the
/// coarsest contribute mean(cs)^w, the coarsest contributes mean(l * cs)^w.
/// When a scale is smaller than the window, the window is truncated to the
/// largest odd size that fits and renormalized. Fewer scales than weights are
/// used on small images, with the leading weights renormalized to sum to 1.
/// Color images average the per-channel products. Negative per-scale terms are
/// clamped to zero (zero gradient through the clamp).
MsSsimResult ms_ssim_with_grad(const ImageTensor &a, const ImageTensor &b, const SsimParams &p = {});

inline double ms_ssim(const ImageTensor &a, const ImageTensor &b, const SsimParams &p = {}) {
  return ms_ssim_with_grad(a, b, p).value;
}

/// 1 - MS-SSIM(x, y) and its gradient in x.
LossResult fidelity_loss(const ImageTensor &x, const ImageTensor &y, const SsimParams &p = {});

/// 1-D normalized Gaussian taps of odd length `size`.
std::vector<double> gaussian_taps(int size, double sigma);

} // namespace otre
