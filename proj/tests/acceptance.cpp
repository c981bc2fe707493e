// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is
// nonzero when any criterion fails.

#include "otre/degrade.hpp"
#include "otre/error.hpp"
#include "otre/generator.hpp"
#include "otre/layers.hpp"
#include "otre/metrics.hpp"
#include "otre/refine.hpp"
#include "otre/weights.hpp"
#include "support/linear_oracle.hpp"
#include "support/oracles.hpp"

#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>

using namespace otre;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(const std::string &name, double budget_seconds, const std::function<Outcome()> &fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception &e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > budget_seconds) {
    o.pass = false;
    o.detail += "; over time budget";
  }
  failures += !o.pass;
  std::printf("%s  %-28s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string num(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

std::vector<float> random_floats(std::mt19937_64 &rng, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<float> v(n);
  for (float &x : v)
    x = float(d(rng));
  return v;
}

FeatureMap as_map(const std::vector<double> &v, int c, int h, int w) {
  FeatureMap m(c, h, w);
  m.data = v;
  return m;
}

ImageTensor constant(int c, int h, int w, double v) {
  ImageTensor img(c, h, w);
  for (double &x : img.data())
    x = v;
  return img;
}

Outcome ms_ssim_gradient() {
  std::mt19937_64 rng(20240);
  int checked = 0;
  double worst = 0.0;
  for (int pair = 0; pair < 10; ++pair) {
    auto a = oracle::random_image(rng, 3, 64, 64);
    auto b = a;
    std::normal_distribution<double> n(0.0, 0.1);
    for (double &v : b.data())
      v = std::clamp(v + n(rng), 0.0, 1.0);
    const auto r = ms_ssim_with_grad(a, b);
    const double scale = max_abs(r.grad);
    std::uniform_int_distribution<std::size_t> pick(0, a.size() - 1);
    for (int s = 0; s < 100; ++s) {
      const std::size_t i = pick(rng);
      auto ap = a, am = a;
      ap.data()[i] += 1e-4;
      am.data()[i] -= 1e-4;
      const double fd = (ms_ssim(ap, b) - ms_ssim(am, b)) / 2e-4;
      worst = std::max(worst, std::abs(fd - r.grad.data()[i]) / std::max(std::abs(r.grad.data()[i]), 1e-2 * scale));
      ++checked;
    }
  }
  double id_err = 0.0, id_grad = 0.0;
  for (int t = 0; t < 10; ++t) {
    auto x = oracle::random_image(rng, 3, 64, 64);
    const auto r = ms_ssim_with_grad(x, x);
    id_err = std::max(id_err, std::abs(r.value - 1.0));
    id_grad = std::max(id_grad, max_abs(r.grad));
  }
  return {checked >= 1000 && worst <= 1e-4 && id_err <= 1e-6 && id_grad <= 1e-6,
          std::to_string(checked) + " coords, worst rel err " + num(worst, 3) + "; identity |1-v| " + num(id_err, 3) +
              ", max|grad| " + num(id_grad, 3)};
}

Outcome closed_forms() {
  const double s = ssim(constant(1, 32, 32, 0.2), constant(1, 32, 32, 0.4));
  auto x = constant(3, 16, 16, 0.3), y = constant(3, 16, 16, 0.4);
  const double p = psnr(x, y);
  return {std::abs(s - 0.80011) <= 1e-4 && std::abs(p - 20.0) <= 1e-6,
          "ssim(0.2, 0.4) = " + num(s, 8) + ", psnr(+0.1) = " + num(p, 12) + " dB"};
}

Outcome linear_oracle() {
  int accurate = 0, wins = 0;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto inst = oracle::linear_instance(5000 + std::uint64_t(i), oracle::gamma_for_instance(i));
    auto cfg = oracle::linear_config(inst);
    cfg.tol = 1e-10;
    cfg.max_iters = 400;
    const auto r = refine(inst.y, inst.y, cfg, inst.g);
    const double err = l2_distance(r.x_star, inst.solution) / l2_norm(inst.solution);
    worst = std::max(worst, err);
    accurate += err <= 1e-5 && r.iters <= 400;
    const auto acc = oracle::run_linear(inst, true), gd = oracle::run_linear(inst, false);
    wins += acc.iters_to_tol > 0 && (gd.iters_to_tol < 0 || acc.iters_to_tol < gd.iters_to_tol);
  }
  return {accurate == 50 && wins >= 40, "direct solve matched on " + std::to_string(accurate) +
                                            "/50 (worst " + num(worst, 3) + "); accelerated fewer iterations on " +
                                            std::to_string(wins) + "/50, need 40"};
}

Outcome nesterov() {
  const double t1 = nesterov_next(1.0), t2 = nesterov_next(t1);
  const double want_t1 = (1.0 + std::sqrt(5.0)) / 2.0;
  const double want_t2 = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * want_t1 * want_t1));
  std::mt19937_64 rng(9);
  auto y = oracle::random_image(rng, 1, 8, 8), x0 = oracle::random_image(rng, 1, 8, 8);
  ReConfig cfg;
  cfg.fidelity = Fidelity::Quadratic;
  cfg.eta = 0.5;
  cfg.gamma = 0.3;
  const auto g = oracle::linear_instance(9, 0.3).g;
  cfg.tol = std::numeric_limits<double>::infinity();
  const int inf_iters = refine(y, x0, cfg, g).iters;
  cfg.tol = 0.0;
  cfg.max_iters = 57;
  const int zero_iters = refine(y, x0, cfg, g).iters;
  const bool ok = std::abs(t1 - want_t1) <= 1e-12 && std::abs(t2 - want_t2) <= 1e-12 && inf_iters == 1 &&
                  zero_iters == 57;
  return {ok, "t1 = " + num(t1, 10) + ", t2 = " + num(t2, 10) +
                  " (recurrence with t0 = 1; the quoted 2.1180339 does not satisfy it); tol=inf -> " +
                  std::to_string(inf_iters) + " iter, tol=0 -> " + std::to_string(zero_iters) + "/57"};
}

Outcome spectral_norm() {
  std::mt19937_64 rng(4242);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::uint32_t oc = 4 + std::uint32_t(rng() % 29), ic = 1 + std::uint32_t(rng() % 16);
    const std::uint32_t k = rng() % 2 ? 3 : 1;
    std::vector<std::uint32_t> shape{oc, ic, k, k};
    auto w = random_floats(rng, std::size_t(oc * ic * k * k));
    worst = std::max(worst, oracle::rel_diff(verify_spectral_norm(w, shape),
                                             oracle::top_singular_value(w, int(oc), int(ic * k * k))));
  }

  GeneratorSpec spec{1, 4, 2, 1, true, 3, true};
  WeightManifest m = zero_weights(spec);
  LayerRecord *rec = nullptr;
  for (auto &r : m.records)
    if (r.name == "enc0.rb.conv1")
      rec = &r;
  std::normal_distribution<double> n;
  Eigen::MatrixXd a(4, 4), bm(36, 4);
  for (int i = 0; i < a.size(); ++i)
    a.data()[i] = n(rng);
  for (int i = 0; i < bm.size(); ++i)
    bm.data()[i] = n(rng);
  Eigen::MatrixXd u = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
  Eigen::MatrixXd v = Eigen::HouseholderQR<Eigen::MatrixXd>(bm).householderQ() * Eigen::MatrixXd::Identity(36, 4);
  Eigen::VectorXd s(4);
  s << 1.8, 0.9, 0.5, 0.1;
  Eigen::MatrixXd w = u * s.asDiagonal() * v.transpose();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 36; ++c)
      rec->data[std::size_t(r * 36 + c)] = float(w(r, c));
  const auto p = fs::temp_directory_path() / "otre_acceptance_sigma18.otre";
  write_weights(m, p);
  ErrorCode code = ErrorCode::Ok;
  try {
    load_weights(p);
  } catch (const Error &e) {
    code = e.code();
  }
  return {worst <= 1e-3 && code == ErrorCode::LipschitzViolation,
          "50 kernels, worst rel err " + num(worst, 3) + "; sigma=1.8 layer -> " + error_code_name(code)};
}

Outcome identity_and_layers() {
  std::mt19937_64 rng(31);
  bool identity = true;
  for (GeneratorSpec spec : {GeneratorSpec{1, 1, 2, 1, true, 3, true}, GeneratorSpec{2, 8, 2, 1, true, 3, true},
                             GeneratorSpec{}}) {
    auto x = oracle::random_image(rng, 3, 32, 32);
    identity = identity && Generator(spec, zero_weights(spec)).forward(x) == x;
  }
  auto pick = [&](int lo, int hi) { return lo + int(rng() % unsigned(hi - lo + 1)); };
  double conv_worst = 0.0, eca_worst = 0.0;
  for (int t = 0; t < 60; ++t) {
    const int ic = pick(1, 6), oc = pick(1, 6), kh = pick(1, 4), kw = pick(1, 4);
    const int stride = pick(1, 3), pad = pick(0, 2);
    const int h = pick(kh, 14), w = pick(kw, 14);
    std::vector<double> in(std::size_t(ic * h * w));
    for (double &v : in)
      v = double(rng() % 2001) / 1000.0 - 1.0;
    auto k = random_floats(rng, std::size_t(oc * ic * kh * kw));
    auto bias = random_floats(rng, std::size_t(oc));
    int oh = 0, ow = 0;
    const auto want = oracle::conv2d(in, ic, h, w, k, bias, oc, kh, kw, stride, pad, oh, ow);
    std::vector<std::uint32_t> shape{std::uint32_t(oc), std::uint32_t(ic), std::uint32_t(kh), std::uint32_t(kw)};
    const auto got = conv2d_forward(as_map(in, ic, h, w), ConvKernel::from_shape(k, shape), bias, stride, pad);
    if (got.height != oh || got.width != ow)
      return {false, "conv output shape mismatch"};
    for (std::size_t i = 0; i < want.size(); ++i)
      conv_worst = std::max(conv_worst, std::abs(got.data[i] - want[i]));
  }
  for (int t = 0; t < 60; ++t) {
    const int c = pick(1, 12), h = pick(1, 8), w = pick(1, 8), k = 1 + 2 * pick(0, 2);
    std::vector<double> in(std::size_t(c * h * w));
    for (double &v : in)
      v = double(rng() % 2001) / 1000.0 - 1.0;
    auto kernel = random_floats(rng, std::size_t(k));
    const auto want = oracle::eca(in, c, h, w, kernel);
    const auto got = eca_forward(as_map(in, c, h, w), kernel);
    for (std::size_t i = 0; i < want.size(); ++i)
      eca_worst = std::max(eca_worst, std::abs(got.data[i] - want[i]));
  }
  return {identity && conv_worst <= 1e-6 && eca_worst <= 1e-6,
          std::string("zero residual generators ") + (identity ? "bitwise identity" : "NOT identity") +
              "; conv max err " + num(conv_worst, 3) + ", eca max err " + num(eca_worst, 3) + " over 60 shapes each"};
}

Outcome format_and_golden() {
  int identical = 0, total = 0;
  for (const char *name : {"golden_8x8.otre", "toy_denoiser.otre"}) {
    const auto bytes = oracle::read_bytes(oracle::data_dir() / name);
    identical += encode_weights(decode_weights(bytes)) == bytes;
    ++total;
  }
  std::mt19937_64 rng(77);
  for (GeneratorSpec spec : {GeneratorSpec{1, 2, 2, 1, true, 3, true}, GeneratorSpec{3, 4, 2, 1, false, 1, false}}) {
    auto m = zero_weights(spec);
    for (auto &r : m.records)
      r.data = random_floats(rng, r.data.size(), 0.1);
    m.records.front().sn_sigma = 0.75;
    const auto bytes = encode_weights(m);
    identical += encode_weights(decode_weights(bytes)) == bytes && decode_weights(bytes) == m;
    ++total;
  }
  const auto g = Generator::load(oracle::data_dir() / "golden_8x8.otre");
  const auto y = g.forward(load_image(oracle::data_dir() / "golden_8x8_input.png"));
  std::ifstream f(oracle::data_dir() / "golden_8x8_expected.txt");
  std::vector<double> want;
  for (std::string line; std::getline(f, line);)
    if (!line.empty())
      want.push_back(std::strtod(line.c_str(), nullptr));
  std::size_t mismatches = want.size() == y.size() ? 0 : want.size() + 1;
  for (std::size_t i = 0; i < std::min(want.size(), y.size()); ++i)
    mismatches += y.data()[i] != want[i];
  return {identical == total && mismatches == 0, std::to_string(identical) + "/" + std::to_string(total) +
                                                     " byte-identical round trips; golden vector " +
                                                     std::to_string(want.size()) + " values, " +
                                                     std::to_string(mismatches) + " mismatches"};
}

int run_cli(const std::string &args) {
  const std::string cmd = "\"" OTRE_CLI_PATH "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string q(const fs::path &p) { return "\"" + p.string() + "\""; }

Outcome end_to_end() {
  const auto dir = fs::temp_directory_path() / "otre_acceptance_e2e";
  fs::remove_all(dir);
  fs::create_directories(dir / "clean");
  std::mt19937_64 rng(2025);
  for (int i = 0; i < 20; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img%02d.png", i);
    save_image(oracle::smooth_image(rng, 3, 64, 64), dir / "clean" / name);
  }
  if (run_cli("degrade --input " + q(dir / "clean") + " --output " + q(dir / "low") + " --blur 1 --noise 0.05 --seed 1"))
    return {false, "degrade command failed"};
  auto enhance = [&](const std::string &gen, const std::string &out) -> std::pair<double, double> {
    if (run_cli("enhance " + gen + " --refine --side 0 --input " + q(dir / "low") + " --reference " +
                q(dir / "clean") + " --output " + q(dir / out)))
      throw std::runtime_error("enhance " + gen + " failed");
    const auto side = nlohmann::json::parse(std::ifstream(dir / out / "report.csv.json"));
    if (side["records"] != 20 || side["failed"] != 0)
      throw std::runtime_error("enhance " + gen + " did not process 20 images");
    return {side["means"]["psnr"].get<double>(), side["means"]["input_psnr"].get<double>()};
  };
  const auto [id_out, id_in] = enhance("--identity", "identity");
  const auto [toy_out, toy_in] =
      enhance("--weights " + q(oracle::data_dir() / "toy_denoiser.otre"), "toy");
  const double id_delta = id_out - id_in, toy_delta = toy_out - toy_in;
  return {id_delta >= -0.1 && toy_delta >= 1.0,
          "degraded " + num(id_in, 5) + " dB; identity refine " + num(id_out, 5) + " dB (" + num(id_delta, 3) +
              "); toy checkpoint refine " + num(toy_out, 5) + " dB (+" + num(toy_delta, 3) + ")"};
}

} // namespace

int main() {
  criterion("ms-ssim gradient", 60, ms_ssim_gradient);
  criterion("closed-form metrics", 60, closed_forms);
  criterion("refine linear oracle", 60, linear_oracle);
  criterion("momentum and stopping rule", 60, nesterov);
  criterion("spectral norm", 60, spectral_norm);
  criterion("identity and layer oracles", 60, identity_and_layers);
  criterion("weight format and golden", 60, format_and_golden);
  criterion("end-to-end recovery", 300, end_to_end);
  std::printf("%d criteria failed\n", failures);
  return failures ? 1 : 0;
}
