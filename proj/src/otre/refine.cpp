#include "otre/refine.hpp"

#include "otre/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace otre {

void ReConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta))
    fail(ErrorCode::InvalidArgument, "step size eta must be positive and finite");
  if (!(gamma >= 0.0) || !std::isfinite(gamma))
    fail(ErrorCode::InvalidArgument, "gamma must be finite and >= 0");
  if (!(tol >= 0.0))
    fail(ErrorCode::InvalidArgument, "tol must be >= 0");
  if (max_iters < 1)
    fail(ErrorCode::InvalidArgument, "max_iters must be >= 1");
  if (max_step_halvings < 0)
    fail(ErrorCode::InvalidArgument, "max_step_halvings must be >= 0");
  if (fidelity == Fidelity::MsSsim)
    ssim.validate();
}

double nesterov_next(double t_prev) noexcept { return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_prev * t_prev)); }

LossResult fidelity_term(const ImageTensor &x, const ImageTensor &y, const ReConfig &cfg) {
  require_same_shape(x, y, "fidelity");
  if (cfg.fidelity == Fidelity::MsSsim)
    return fidelity_loss(x, y, cfg.ssim);
  LossResult r{0.0, ImageTensor(x.channels(), x.height(), x.width())};
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.data()[i] - y.data()[i];
    r.grad.data()[i] = d;
    s += d * d;
  }
  r.value = 0.5 * s;
  return r;
}

namespace {

struct GradientEval {
  ImageTensor grad;
  double objective;
};

GradientEval evaluate(const ImageTensor &x, const ImageTensor &y, double gamma, const Enhancer &g,
                      const ReConfig &cfg) {
  LossResult fid = fidelity_term(x, y, cfg);
  double prior = 0.0;
  if (gamma != 0.0) {
    const ImageTensor gx = g.enhance(x);
    require_same_shape(x, gx, "enhancer output");
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = x.data()[i] - gx.data()[i];
      prior += x.data()[i] * r;
      fid.grad.data()[i] += gamma * r;
    }
  }
  return {std::move(fid.grad), fid.value + gamma * 0.5 * prior};
}

bool stop_rule(double step, double prev_norm, double tol) {
  if (std::isinf(tol))
    return true;
  return step <= tol * prev_norm;
}

enum class Attempt { Finished, NonFinite };

Attempt run_attempt(const ImageTensor &y, const ImageTensor &x0, const ReConfig &cfg, const Enhancer &g,
                    double eta, bool accelerated, ReResult &out) {
  ImageTensor x_prev = x0;
  ImageTensor s = x0;
  ImageTensor x(x0.channels(), x0.height(), x0.width());
  double t = 1.0;
  out.trace.clear();
  out.converged = false;
  for (int k = 1; k <= cfg.max_iters; ++k) {
    const double t_next = nesterov_next(t);
    GradientEval ev = evaluate(s, y, cfg.gamma, g, cfg);
    if (cfg.record_trace)
      out.trace.push_back({k, ev.objective, l2_norm(ev.grad)});
    bool finite = true;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double v = s.data()[i] - eta * ev.grad.data()[i];
      if (!std::isfinite(v))
        finite = false;
      else if (cfg.clamp)
        v = std::clamp(v, 0.0, 1.0);
      x.data()[i] = v;
    }
    if (!finite) {
      out.x_star = x_prev;
      out.iters = k - 1;
      return Attempt::NonFinite;
    }
    const double momentum = accelerated ? (t - 1.0) / t_next : 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x.data()[i] + momentum * (x.data()[i] - x_prev.data()[i]);
      s.data()[i] = cfg.clamp ? std::clamp(v, 0.0, 1.0) : v;
    }
    const bool stop = stop_rule(l2_distance(x, x_prev), l2_norm(x_prev), cfg.tol);
    if (cfg.on_iterate)
      cfg.on_iterate(k, x);
    std::swap(x_prev, x);
    t = t_next;
    out.iters = k;
    if (stop) {
      out.converged = true;
      break;
    }
  }
  out.x_star = std::move(x_prev);
  return Attempt::Finished;
}

ReResult solve(const ImageTensor &y, const ImageTensor &x0, const ReConfig &cfg, const Enhancer &g,
               bool accelerated) {
  cfg.validate();
  require_same_shape(y, x0, "refine");
  ReResult out;
  double eta = cfg.eta;
  for (int attempt = 0;; ++attempt) {
    if (run_attempt(y, x0, cfg, g, eta, accelerated, out) == Attempt::Finished)
      break;
    if (attempt == cfg.max_step_halvings) {
      out.diverged = true;
      out.converged = false;
      break;
    }
    eta *= 0.5;
  }
  out.eta_used = eta;
  const GradientEval fin = evaluate(out.x_star, y, cfg.gamma, g, cfg);
  out.stationarity_residual = l2_norm(fin.grad);
  if (!std::isfinite(out.stationarity_residual))
    out.stationarity_residual = std::numeric_limits<double>::max();
  return out;
}

} // namespace

ImageTensor re_gradient(const ImageTensor &x, const ImageTensor &y, double gamma, const Enhancer &g,
                        const ReConfig &cfg) {
  return evaluate(x, y, gamma, g, cfg).grad;
}

ReResult refine(const ImageTensor &y, const ImageTensor &x0, const ReConfig &cfg, const Enhancer &g) {
  return solve(y, x0, cfg, g, true);
}

ReResult refine_unaccelerated(const ImageTensor &y, const ImageTensor &x0, const ReConfig &cfg, const Enhancer &g) {
  return solve(y, x0, cfg, g, false);
}

GridSearchResult gamma_grid_search(const ImageTensor &y, const ImageTensor &x0, const std::vector<double> &candidates,
                                   const ReConfig &cfg, const Enhancer &g, const ImageTensor *reference) {
  if (candidates.empty())
    fail(ErrorCode::EmptyGrid, "gamma grid is empty");
  if (reference)
    require_same_shape(y, *reference, "grid search reference");
  GridSearchResult best;
  bool have = false;
  double best_score = 0.0;
  for (double gamma : candidates) {
    ReConfig c = cfg;
    c.gamma = gamma;
    ReResult r = refine(y, x0, c, g);
    const double score = reference ? psnr(r.x_star, *reference) : -r.stationarity_residual;
    best.scores.push_back(score);
    if (!have || score > best_score || (score == best_score && gamma < best.gamma)) {
      have = true;
      best_score = score;
      best.gamma = gamma;
      best.result = std::move(r);
    }
  }
  return best;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  if (n < 1 || !(lo > 0.0) || !(hi > 0.0))
    fail(ErrorCode::InvalidArgument, "log grid needs n >= 1 and positive bounds");
  if (n == 1)
    return {lo};
  std::vector<double> out;
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < n; ++i)
    out.push_back(i == 0 ? lo : i == n - 1 ? hi : std::exp(a + (b - a) * i / (n - 1)));
  return out;
}

void write_trace_csv(const ReResult &r, const std::filesystem::path &path) {
  std::ofstream f(path);
  if (!f)
    fail(ErrorCode::IoError, "cannot open " + path.string());
  f << "iter,objective,residual\n" << std::setprecision(17);
  for (const auto &row : r.trace)
    f << row.iter << ',' << row.objective << ',' << row.residual << '\n';
}

} // namespace otre
