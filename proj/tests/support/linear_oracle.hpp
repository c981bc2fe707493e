// Quadratic-fidelity problems with a linear symmetric enhancer G(x) = A x,
// whose minimizer solves (I + gamma (I - A)) x = y exactly.
#pragma once

#include "otre/refine.hpp"

#include <Eigen/Dense>

#include <random>

namespace oracle {

class LinearEnhancer final : public otre::Enhancer {
public:
  explicit LinearEnhancer(Eigen::MatrixXd a) : a_(std::move(a)) {}
  otre::ImageTensor enhance(const otre::ImageTensor &x) const override {
    Eigen::Map<const Eigen::VectorXd> v(x.data().data(), Eigen::Index(x.size()));
    Eigen::VectorXd r = a_ * v;
    return otre::ImageTensor(x.channels(), x.height(), x.width(), std::vector<double>(r.data(), r.data() + r.size()));
  }
  const Eigen::MatrixXd &matrix() const { return a_; }

private:
  Eigen::MatrixXd a_;
};

struct LinearInstance {
  LinearEnhancer g;
  otre::ImageTensor y;
  otre::ImageTensor solution;
  double gamma;
  double eta; ///< 1 / (1 + gamma (1 - lambda_min(A)))
};

/// Random symmetric A = Q diag(lambda) Q^T with lambda uniform in [-1, 1] and
/// Q from the QR factorization of a Gaussian matrix; y uniform in [0, 1].
inline LinearInstance linear_instance(std::uint64_t seed, double gamma, int side = 8) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int dim = side * side;
  Eigen::MatrixXd m(dim, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = n(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
  Eigen::VectorXd lambda(dim);
  for (int i = 0; i < dim; ++i)
    lambda(i) = u(rng);
  const Eigen::MatrixXd a = q * lambda.asDiagonal() * q.transpose();
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());

  otre::ImageTensor y(1, side, side);
  for (double &v : y.data())
    v = 0.5 * (u(rng) + 1.0);
  const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(dim, dim) + gamma * (Eigen::MatrixXd::Identity(dim, dim) - sym);
  Eigen::Map<const Eigen::VectorXd> yv(y.data().data(), dim);
  const Eigen::VectorXd xs = h.ldlt().solve(yv);
  const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues().minCoeff();
  return {LinearEnhancer(sym), y, otre::ImageTensor(1, side, side, std::vector<double>(xs.data(), xs.data() + dim)),
          gamma, 1.0 / (1.0 + gamma * (1.0 - lmin))};
}

inline otre::ReConfig linear_config(const LinearInstance &inst) {
  otre::ReConfig cfg;
  cfg.fidelity = otre::Fidelity::Quadratic;
  cfg.clamp = false;
  cfg.gamma = inst.gamma;
  cfg.eta = inst.eta;
  cfg.record_trace = false;
  return cfg;
}

struct LinearRun {
  otre::ReResult result;
  int iters_to_tol = -1; ///< first k with ||x_k - x*|| <= tol ||x*||, -1 if never
  double final_error = 0.0;
};

inline LinearRun run_linear(const LinearInstance &inst, bool accelerated, double tol = 1e-5, int max_iters = 400) {
  otre::ReConfig cfg = linear_config(inst);
  cfg.max_iters = max_iters;
  cfg.tol = 0.0;
  LinearRun run;
  const double ref = otre::l2_norm(inst.solution);
  cfg.on_iterate = [&](int k, const otre::ImageTensor &x) {
    if (run.iters_to_tol < 0 && otre::l2_distance(x, inst.solution) <= tol * ref)
      run.iters_to_tol = k;
  };
  run.result = accelerated ? otre::refine(inst.y, inst.y, cfg, inst.g)
                           : otre::refine_unaccelerated(inst.y, inst.y, cfg, inst.g);
  run.final_error = otre::l2_distance(run.result.x_star, inst.solution) / ref;
  return run;
}

inline double gamma_for_instance(int i) {
  constexpr double gammas[3] = {0.1, 1.0, 10.0};
  return gammas[i % 3];
}

} // namespace oracle
