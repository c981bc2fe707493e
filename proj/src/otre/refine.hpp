#pragma once

#include "otre/generator.hpp"
#include "otre/image.hpp"
#include "otre/metrics.hpp"

#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace otre {

enum class Fidelity { MsSsim, Quadratic };

struct ReConfig {
  double eta = 0.1;     ///< step size
  double gamma = 0.0;   ///< prior strength
  double tol = 1e-4;    ///< stop once ||x_k - x_{k-1}|| <= tol * ||x_{k-1}||
  int max_iters = 400;
  Fidelity fidelity = Fidelity::MsSsim;
  bool clamp = true;            ///< project every iterate and extrapolated point onto [0, 1]
  int max_step_halvings = 8;    ///< retries with eta / 2 after a non-finite iterate
  bool record_trace = true;
  SsimParams ssim{};
  /// Called with (k, x_k) after every accepted iterate.
  std::function<void(int, const ImageTensor &)> on_iterate;

  void validate() const;
};

struct ReTraceRow {
  int iter;
  double objective; ///< fidelity + gamma * R at the extrapolated point s
  double residual;  ///< ||gradient|| at the extrapolated point s
};

struct ReResult {
  ImageTensor x_star;
  int iters = 0;
  bool converged = false;
  bool diverged = false;     ///< every step size retry produced a non-finite iterate
  double eta_used = 0.0;
  double stationarity_residual = 0.0; ///< ||grad fidelity + gamma (x - G(x))|| at x_star
  std::vector<ReTraceRow> trace;
};

/// Next element of the momentum sequence t_k = (1 + sqrt(1 + 4 t_{k-1}^2)) / 2.
double nesterov_next(double t_prev) noexcept;

/// Fidelity value and gradient: 1 - MS-SSIM(x, y) or 0.5 ||x - y||^2.
LossResult fidelity_term(const ImageTensor &x, const ImageTensor &y, const ReConfig &cfg);

/// Gradient of fidelity + gamma * R at x, R(x) = 0.5 x^T (x - G(x)), using the
/// prior gradient x - G(x).
ImageTensor re_gradient(const ImageTensor &x, const ImageTensor &y, double gamma, const Enhancer &g,
                        const ReConfig &cfg);

/// Accelerated descent on fidelity(x, y) + gamma * R(x) starting from x0.
/// Runs without restarts; a non-finite iterate aborts the attempt and retries
/// with half the step size up to cfg.max_step_halvings times.
ReResult refine(const ImageTensor &y, const ImageTensor &x0, const ReConfig &cfg, const Enhancer &g);

/// Same solver with the momentum term removed (plain projected gradient descent).
ReResult refine_unaccelerated(const ImageTensor &y, const ImageTensor &x0, const ReConfig &cfg, const Enhancer &g);

struct GridSearchResult {
  double gamma = 0.0;
  ReResult result;
  std::vector<double> scores; ///< one per candidate, in input order
};

/// Refines once per candidate gamma. With a reference image the candidate
/// with the highest PSNR wins; without one, the smallest stationarity
/// residual. Ties go to the smaller gamma. Throws EmptyGrid on no candidates.
GridSearchResult gamma_grid_search(const ImageTensor &y, const ImageTensor &x0, const std::vector<double> &candidates,
                                   const ReConfig &cfg, const Enhancer &g,
                                   const ImageTensor *reference = nullptr);

/// `n` log-spaced values from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, int n);

/// CSV with header "iter,objective,residual".
void write_trace_csv(const ReResult &r, const std::filesystem::path &path);

} // namespace otre
