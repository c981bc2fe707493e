// otre: command-line front end over the C API.
//
//   otre enhance  --weights w.otre --input in/ --output out/ [--refine ...]
//   otre degrade  --input clean/ --output low/ --blur 1 --noise 0.05 --seed 7
//   otre evaluate --pairs low/manifest.jsonl --metrics psnr,ssim,msssim
//   otre manifest --root images/ [--labels grades.csv] --output m.jsonl

#include "otre/otre.h"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Failure : std::runtime_error {
  otre_status status;
  Failure(otre_status s, const std::string &what)
      : std::runtime_error(std::string(otre_status_name(s)) + ": " + what), status(s) {}
};

void check(otre_status s, const std::string &context) {
  if (s != OTRE_OK)
    throw Failure(s, context + ": " + otre_last_error());
}

struct ImageDeleter {
  void operator()(otre_image *p) const { otre_image_free(p); }
};
struct GeneratorDeleter {
  void operator()(otre_generator *p) const { otre_generator_free(p); }
};
struct ManifestDeleter {
  void operator()(otre_manifest *p) const { otre_manifest_free(p); }
};
using Image = std::unique_ptr<otre_image, ImageDeleter>;
using Generator = std::unique_ptr<otre_generator, GeneratorDeleter>;
using Manifest = std::unique_ptr<otre_manifest, ManifestDeleter>;

Image load(const fs::path &p) {
  otre_image *img = nullptr;
  check(otre_image_load(p.string().c_str(), &img), p.string());
  return Image(img);
}

Image preprocessed(Image img, int side, const fs::path &p) {
  if (side == 0)
    return img;
  otre_image *out = nullptr;
  check(otre_preprocess(img.get(), side, &out), p.string());
  return Image(out);
}

void save(const otre_image *img, const fs::path &p) { check(otre_image_save(img, p.string().c_str()), p.string()); }

/// Images under `input` (sorted) or `input` itself when it is a file.
std::vector<fs::path> list_inputs(const fs::path &input) {
  if (fs::is_regular_file(input))
    return {input};
  otre_manifest *m = nullptr;
  check(otre_manifest_build(input.string().c_str(), nullptr, &m), input.string());
  Manifest owned(m);
  std::vector<fs::path> out;
  for (size_t i = 0; i < otre_manifest_size(m); ++i) {
    otre_manifest_entry e;
    check(otre_manifest_entry_get(m, i, &e), input.string());
    out.emplace_back(e.path);
  }
  return out;
}

int thread_count(int flag) {
  if (flag > 0)
    return flag;
  if (const char *env = std::getenv("OTRE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0)
      return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs job(i) for i in [0, n) on a bounded pool of workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)> &job) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;)
      job(i);
  };
  const int k = int(std::min<std::size_t>(std::size_t(std::max(threads, 1)), std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < k; ++t)
    pool.emplace_back(worker);
  worker();
  for (auto &t : pool)
    t.join();
}

std::string fmt(double v) {
  if (std::isnan(v))
    return "";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string csv_field(const std::string &s) {
  if (s.find_first_of(",\"\n") == std::string::npos)
    return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"')
      out += '"';
    out += c;
  }
  return out + "\"";
}

// ---------------------------------------------------------------------------
// Reports

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct Record {
  std::string input, output, reference;
  bool ok = false;
  std::string error;
  std::vector<std::pair<std::string, double>> values; ///< column name -> value
  double seconds = 0.0;
};

struct Report {
  std::vector<std::string> columns;
  std::vector<Record> records;
  json config;

  bool all_ok() const {
    return std::all_of(records.begin(), records.end(), [](const Record &r) { return r.ok; });
  }

  /// Mean of each value column over successful records that have it.
  json aggregates() const {
    json out = json::object();
    for (const auto &c : columns) {
      double s = 0.0;
      int n = 0;
      for (const auto &r : records)
        for (const auto &[k, v] : r.values)
          if (r.ok && k == c && !std::isnan(v)) {
            s += v;
            ++n;
          }
      if (n > 0)
        out[c] = s / n;
    }
    return out;
  }

  void write(const fs::path &csv, double wall_seconds) const {
    std::ofstream f(csv);
    if (!f)
      throw Failure(OTRE_ERR_IO, "cannot write report " + csv.string());
    f << "input,output,reference,status";
    for (const auto &c : columns)
      f << ',' << c;
    f << ",seconds,error\n";
    for (const auto &r : records) {
      f << csv_field(r.input) << ',' << csv_field(r.output) << ',' << csv_field(r.reference) << ','
        << (r.ok ? "ok" : "failed");
      for (const auto &c : columns) {
        double v = kMissing;
        for (const auto &[k, x] : r.values)
          if (k == c)
            v = x;
        f << ',' << fmt(v);
      }
      f << ',' << fmt(r.seconds) << ',' << csv_field(r.error) << '\n';
    }

    json side;
    side["config"] = config;
    side["records"] = records.size();
    side["failed"] = std::count_if(records.begin(), records.end(), [](const Record &r) { return !r.ok; });
    side["means"] = aggregates();
    side["wall_seconds"] = wall_seconds;
    side["partial"] = !all_ok();
    std::ofstream(fs::path(csv).concat(".json")) << side.dump(2) << '\n';

    const fs::path marker = fs::path(csv).concat(".partial");
    if (all_ok()) {
      fs::remove(marker);
    } else {
      std::ofstream m(marker);
      for (const auto &r : records)
        if (!r.ok)
          m << r.input << '\t' << r.error << '\n';
    }
  }
};

template <class Fn> Record timed(const std::string &input, Fn &&fn) {
  Record r;
  r.input = input;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    fn(r);
    r.ok = true;
  } catch (const Failure &e) {
    r.error = e.what();
  } catch (const std::exception &e) {
    r.error = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

int finish(const Report &report, const fs::path &csv, std::chrono::steady_clock::time_point t0) {
  report.write(csv, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  int failed = 0;
  for (const auto &r : report.records)
    if (!r.ok) {
      ++failed;
      std::cerr << "error: " << r.error << '\n';
    }
  const json means = report.aggregates();
  std::cout << report.records.size() - std::size_t(failed) << '/' << report.records.size() << " ok";
  for (const auto &[k, v] : means.items())
    std::cout << "  mean " << k << '=' << std::setprecision(6) << v.get<double>();
  std::cout << "\nreport: " << csv.string() << '\n';
  if (failed)
    std::cerr << "partial run: " << failed << " failed, see " << csv.string() << ".partial\n";
  return failed ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Metrics

struct Metric {
  std::string name;
  otre_status (*fn)(const otre_image *, const otre_image *, double *);
};

otre_status ssim_default(const otre_image *a, const otre_image *b, double *v) { return otre_ssim(a, b, nullptr, v); }
otre_status msssim_default(const otre_image *a, const otre_image *b, double *v) {
  return otre_ms_ssim(a, b, nullptr, v, nullptr);
}

std::vector<Metric> parse_metrics(const std::string &list) {
  std::vector<Metric> out;
  std::stringstream ss(list);
  for (std::string name; std::getline(ss, name, ',');) {
    if (name == "psnr")
      out.push_back({name, otre_psnr});
    else if (name == "ssim")
      out.push_back({name, ssim_default});
    else if (name == "msssim" || name == "ms-ssim" || name == "ms_ssim")
      out.push_back({"msssim", msssim_default});
    else
      throw Failure(OTRE_ERR_UNKNOWN_METRIC, "unknown metric '" + name + "' (expected psnr, ssim, msssim)");
  }
  if (out.empty())
    throw Failure(OTRE_ERR_UNKNOWN_METRIC, "empty metric list");
  return out;
}

void add_metrics(Record &r, const std::vector<Metric> &metrics, const otre_image *a, const otre_image *b,
                 const std::string &prefix = "") {
  for (const auto &m : metrics) {
    double v = 0.0;
    check(m.fn(a, b, &v), r.input + ": " + m.name);
    r.values.emplace_back(prefix + m.name, v);
  }
}

// ---------------------------------------------------------------------------
// enhance

struct EnhanceOptions {
  std::string weights, input, output, reference, report;
  bool identity = false, refine = false, no_sn_check = false, trace = false, select_by_reference = false;
  std::optional<double> gamma;
  std::vector<double> gamma_grid;
  double eta = 0.1, tol = 1e-4;
  int iters = 400, side = 256, threads = 0;
};

std::vector<double> log_spaced(double lo, double hi, int n) {
  if (!(lo > 0.0 && hi >= lo && n >= 1))
    throw Failure(OTRE_ERR_INVALID_ARGUMENT, "--gamma-grid needs 0 < lo <= hi and n >= 1");
  std::vector<double> g;
  for (int i = 0; i < n; ++i)
    g.push_back(n == 1 ? lo : std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1)));
  g.front() = lo;
  g.back() = hi;
  return g;
}

int cmd_enhance(const EnhanceOptions &o) {
  const auto t0 = std::chrono::steady_clock::now();
  otre_generator *raw = nullptr;
  if (o.identity)
    check(otre_generator_identity(3, &raw), "identity generator");
  else
    check(otre_generator_load(o.weights.c_str(), o.no_sn_check ? 0 : 1, &raw), o.weights);
  Generator gen(raw);

  otre_re_config cfg;
  otre_re_config_default(&cfg);
  cfg.eta = o.eta;
  cfg.tol = o.tol;
  cfg.max_iters = o.iters;
  std::vector<double> grid;
  if (o.refine) {
    if (o.gamma)
      grid = {*o.gamma};
    else if (!o.gamma_grid.empty())
      grid = log_spaced(o.gamma_grid[0], o.gamma_grid[1], int(o.gamma_grid[2]));
    else
      grid = log_spaced(1e-4, 1e-3, 4);
  }

  const fs::path out_dir = o.output;
  fs::create_directories(out_dir);
  const auto inputs = list_inputs(o.input);
  const bool ref_is_file = !o.reference.empty() && fs::is_regular_file(o.reference);
  const auto metrics = parse_metrics("psnr,ssim,msssim");

  Report report;
  if (o.refine)
    report.columns = {"iters", "converged", "gamma", "residual"};
  if (!o.reference.empty())
    for (const auto &m : metrics) {
      report.columns.push_back(m.name);
      report.columns.push_back("input_" + m.name);
    }
  report.config = {{"command", "enhance"},
                   {"weights", o.identity ? std::string("<identity>") : o.weights},
                   {"input", o.input},
                   {"output", o.output},
                   {"reference", o.reference},
                   {"side", o.side},
                   {"refine", o.refine},
                   {"gamma_grid", grid},
                   {"select_by_reference", o.select_by_reference},
                   {"eta", cfg.eta},
                   {"tol", cfg.tol},
                   {"max_iters", cfg.max_iters},
                   {"fidelity", "ms-ssim"},
                   {"spectral_norm_check", !o.identity && !o.no_sn_check},
                   {"threads", thread_count(o.threads)},
                   {"version", otre_version()}};
  report.records.resize(inputs.size());

  parallel_for(inputs.size(), thread_count(o.threads), [&](std::size_t i) {
    const fs::path in = inputs[i];
    report.records[i] = timed(in.string(), [&](Record &r) {
      const Image y = preprocessed(load(in), o.side, in);
      Image ref;
      if (!o.reference.empty()) {
        const fs::path rp = ref_is_file ? fs::path(o.reference) : fs::path(o.reference) / in.filename();
        r.reference = rp.string();
        ref = preprocessed(load(rp), o.side, rp);
      }
      otre_image *x = nullptr;
      check(otre_generator_forward(gen.get(), y.get(), &x), in.string());
      Image out(x);
      if (o.refine) {
        otre_image *refined = nullptr;
        otre_re_report rep{};
        const otre_image *select = o.select_by_reference ? ref.get() : nullptr;
        if (o.trace && grid.size() == 1) {
          otre_re_config c = cfg;
          c.gamma = grid[0];
          const fs::path tp = out_dir / (in.stem().string() + ".trace.csv");
          check(otre_refine(y.get(), out.get(), gen.get(), &c, tp.string().c_str(), &refined, &rep), in.string());
        } else {
          check(otre_gamma_grid_search(y.get(), out.get(), gen.get(), &cfg, grid.data(), grid.size(), select,
                                       &refined, &rep),
                in.string());
        }
        out.reset(refined);
        r.values.emplace_back("iters", rep.iters);
        r.values.emplace_back("converged", rep.converged);
        r.values.emplace_back("gamma", rep.gamma);
        r.values.emplace_back("residual", rep.stationarity_residual);
        if (rep.diverged)
          throw Failure(OTRE_ERR_NON_FINITE_ITERATE, in.string() + ": refinement diverged");
      }
      const fs::path op = out_dir / (in.stem().string() + ".png");
      save(out.get(), op);
      r.output = op.string();
      if (ref) {
        add_metrics(r, metrics, out.get(), ref.get());
        add_metrics(r, metrics, y.get(), ref.get(), "input_");
      }
    });
  });

  const fs::path csv = o.report.empty() ? out_dir / "report.csv" : fs::path(o.report);
  return finish(report, csv, t0);
}

// ---------------------------------------------------------------------------
// degrade

struct DegradeOptions {
  std::string input, output, params, report;
  otre_degrade_params p{};
  int side = 0, threads = 0;
};

void apply_params_file(const std::string &path, otre_degrade_params &p) {
  std::ifstream f(path);
  if (!f)
    throw Failure(OTRE_ERR_MISSING_FILE, "cannot open params file " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception &e) {
    throw Failure(OTRE_ERR_CORRUPT_DATA, path + ": " + e.what());
  }
  for (const auto &[k, v] : j.items()) {
    if (k == "seed") {
      p.seed = v.get<std::uint64_t>();
      continue;
    }
    double *field = k == "blur_sigma"         ? &p.blur_sigma
                    : k == "illum_strength"   ? &p.illum_strength
                    : k == "brightness_shift" ? &p.brightness_shift
                    : k == "contrast_scale"   ? &p.contrast_scale
                    : k == "noise_std"        ? &p.noise_std
                    : k == "center_jitter"    ? &p.center_jitter
                                              : nullptr;
    if (!field)
      throw Failure(OTRE_ERR_INVALID_ARGUMENT, path + ": unknown parameter '" + k + "'");
    *field = v.get<double>();
  }
}

int cmd_degrade(const DegradeOptions &o, const CLI::App &sub) {
  const auto t0 = std::chrono::steady_clock::now();
  otre_degrade_params p;
  otre_degrade_params_default(&p);
  if (!o.params.empty())
    apply_params_file(o.params, p);
  // Explicit flags override the file.
  auto flag = [&](const char *name, double src, double &dst) {
    if (sub.count(name))
      dst = src;
  };
  flag("--blur", o.p.blur_sigma, p.blur_sigma);
  flag("--illum", o.p.illum_strength, p.illum_strength);
  flag("--shift", o.p.brightness_shift, p.brightness_shift);
  flag("--contrast", o.p.contrast_scale, p.contrast_scale);
  flag("--noise", o.p.noise_std, p.noise_std);
  flag("--jitter", o.p.center_jitter, p.center_jitter);
  if (sub.count("--seed"))
    p.seed = o.p.seed;

  const fs::path out_dir = o.output;
  fs::create_directories(out_dir);
  const auto inputs = list_inputs(o.input);

  Report report;
  report.columns = {"seed", "psnr"};
  report.config = {{"command", "degrade"},
                   {"input", o.input},
                   {"output", o.output},
                   {"side", o.side},
                   {"blur_sigma", p.blur_sigma},
                   {"illum_strength", p.illum_strength},
                   {"brightness_shift", p.brightness_shift},
                   {"contrast_scale", p.contrast_scale},
                   {"noise_std", p.noise_std},
                   {"center_jitter", p.center_jitter},
                   {"seed", p.seed},
                   {"per_image_seed", "seed + index in sorted input order"},
                   {"version", otre_version()}};
  report.records.resize(inputs.size());

  parallel_for(inputs.size(), thread_count(o.threads), [&](std::size_t i) {
    const fs::path in = inputs[i];
    report.records[i] = timed(in.string(), [&](Record &r) {
      const Image x = preprocessed(load(in), o.side, in);
      otre_degrade_params pi = p;
      pi.seed = p.seed + i;
      otre_image *y = nullptr;
      check(otre_degrade(x.get(), &pi, &y), in.string());
      Image deg(y);
      const fs::path op = out_dir / (in.stem().string() + ".png");
      save(deg.get(), op);
      r.output = op.string();
      r.reference = in.string();
      double v = 0.0;
      check(otre_psnr(deg.get(), x.get(), &v), in.string());
      r.values = {{"seed", double(pi.seed)}, {"psnr", v}};
    });
  });

  otre_manifest *m = nullptr;
  check(otre_manifest_create(&m), "manifest");
  Manifest manifest(m);
  for (const auto &r : report.records) {
    if (!r.ok)
      continue;
    const std::string clean = fs::absolute(r.reference).lexically_normal().string();
    const std::string deg = fs::path(r.output).filename().string();
    otre_manifest_entry e{deg.c_str(), OTRE_QUALITY_SYNTHETIC_LOW, 0, 0, clean.c_str()};
    check(otre_manifest_append(m, &e), r.input);
  }
  const fs::path mp = out_dir / "manifest.jsonl";
  check(otre_manifest_save(m, mp.string().c_str()), mp.string());
  std::cout << "manifest: " << mp.string() << " (" << otre_manifest_size(m) << " pairs)\n";

  const fs::path csv = o.report.empty() ? out_dir / "report.csv" : fs::path(o.report);
  return finish(report, csv, t0);
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
  std::string pairs, metrics = "psnr,ssim,msssim", report;
  int threads = 0;
};

int cmd_evaluate(const EvaluateOptions &o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto metrics = parse_metrics(o.metrics);
  otre_manifest *m = nullptr;
  check(otre_manifest_load(o.pairs.c_str(), &m), o.pairs);
  Manifest manifest(m);

  Report report;
  for (const auto &mt : metrics)
    report.columns.push_back(mt.name);
  report.config = {{"command", "evaluate"}, {"pairs", o.pairs}, {"metrics", o.metrics}, {"version", otre_version()}};
  report.records.resize(otre_manifest_size(m));

  parallel_for(report.records.size(), thread_count(o.threads), [&](std::size_t i) {
    otre_manifest_entry e;
    std::string path = "#" + std::to_string(i), clean;
    if (otre_manifest_entry_get(m, i, &e) == OTRE_OK) {
      path = e.path;
      clean = e.clean_path ? e.clean_path : "";
    }
    report.records[i] = timed(path, [&](Record &r) {
      r.reference = clean;
      if (clean.empty())
        throw Failure(OTRE_ERR_INVALID_ARGUMENT, path + ": manifest entry has no clean counterpart");
      const Image a = load(path), b = load(clean);
      add_metrics(r, metrics, a.get(), b.get());
    });
  });

  std::cout << std::left << std::setw(40) << "image";
  for (const auto &mt : metrics)
    std::cout << std::right << std::setw(12) << mt.name;
  std::cout << '\n';
  for (const auto &r : report.records) {
    std::cout << std::left << std::setw(40) << fs::path(r.input).filename().string();
    if (!r.ok) {
      std::cout << "  failed\n";
      continue;
    }
    for (const auto &[k, v] : r.values)
      std::cout << std::right << std::setw(12) << std::fixed << std::setprecision(5) << v;
    std::cout << '\n';
  }
  std::cout.unsetf(std::ios::floatfield);

  const fs::path csv = o.report.empty() ? fs::path(o.pairs).parent_path() / "evaluation.csv" : fs::path(o.report);
  return finish(report, csv, t0);
}

// ---------------------------------------------------------------------------
// manifest

int cmd_manifest(const std::string &root, const std::string &labels, const std::string &output) {
  otre_manifest *m = nullptr;
  check(otre_manifest_build(root.c_str(), labels.empty() ? nullptr : labels.c_str(), &m), root);
  Manifest owned(m);
  for (size_t i = 0; i < otre_manifest_warning_count(m); ++i)
    std::cerr << "warning: " << otre_manifest_warning(m, i) << '\n';
  check(otre_manifest_save(m, output.c_str()), output);
  std::cout << otre_manifest_size(m) << " entries written to " << output << '\n';
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Retinal image enhancement with optimal-transport generators and RE refinement"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(otre_version()));

  EnhanceOptions eo;
  auto *enh = app.add_subcommand("enhance", "Enhance images with a generator, optionally refined");
  auto *w = enh->add_option("--weights", eo.weights, "Generator weights (.otre)")->check(CLI::ExistingFile);
  auto *id = enh->add_flag("--identity", eo.identity, "Use the identity generator instead of weights");
  w->excludes(id);
  enh->add_option("--input", eo.input, "Input image or directory")->required()->check(CLI::ExistingPath);
  enh->add_option("--output", eo.output, "Output directory")->required();
  enh->add_flag("--refine", eo.refine, "Refine with regularization by enhancing");
  auto *g = enh->add_option("--gamma", eo.gamma, "Prior weight for refinement")->check(CLI::NonNegativeNumber);
  enh->add_option("--gamma-grid", eo.gamma_grid, "Log-spaced gamma grid: lo hi n")->expected(3)->excludes(g);
  enh->add_flag("--select-by-reference", eo.select_by_reference,
                "Pick the grid gamma by PSNR against --reference instead of the stationarity residual");
  enh->add_option("--eta", eo.eta, "Step size")->capture_default_str();
  enh->add_option("--iters", eo.iters, "Maximum iterations")->capture_default_str();
  enh->add_option("--tol", eo.tol, "Relative-change stopping tolerance")->capture_default_str();
  enh->add_option("--reference", eo.reference, "Clean image or directory for full-reference metrics")
      ->check(CLI::ExistingPath);
  enh->add_option("--side", eo.side, "Square working size; 0 keeps the native size")->capture_default_str();
  enh->add_flag("--no-sn-check", eo.no_sn_check, "Skip the spectral-norm check on load");
  enh->add_flag("--trace", eo.trace, "Write a per-image iteration trace (single gamma only)");
  enh->add_option("--threads", eo.threads, "Worker threads (default: OTRE_THREADS or all cores)");
  enh->add_option("--report", eo.report, "Report CSV (default: <output>/report.csv)");

  DegradeOptions dopt;
  otre_degrade_params_default(&dopt.p);
  auto *deg = app.add_subcommand("degrade", "Synthesize low-quality counterparts of clean images");
  deg->add_option("--input", dopt.input, "Clean image or directory")->required()->check(CLI::ExistingPath);
  deg->add_option("--output", dopt.output, "Output directory")->required();
  deg->add_option("--params", dopt.params, "JSON file with degradation parameters")->check(CLI::ExistingFile);
  deg->add_option("--blur", dopt.p.blur_sigma, "Gaussian blur sigma in pixels");
  deg->add_option("--illum", dopt.p.illum_strength, "Radial shading depth in [0, 1]");
  deg->add_option("--shift", dopt.p.brightness_shift, "Brightness shift in [-0.5, 0.5]");
  deg->add_option("--contrast", dopt.p.contrast_scale, "Contrast scale in (0, 2]");
  deg->add_option("--noise", dopt.p.noise_std, "Additive Gaussian noise std");
  deg->add_option("--jitter", dopt.p.center_jitter, "Shading-center jitter as a fraction of each side");
  deg->add_option("--seed", dopt.p.seed, "Base seed; image i uses seed + i");
  deg->add_option("--side", dopt.side, "Square working size; 0 keeps the native size")->capture_default_str();
  deg->add_option("--threads", dopt.threads, "Worker threads");
  deg->add_option("--report", dopt.report, "Report CSV (default: <output>/report.csv)");

  EvaluateOptions vo;
  auto *ev = app.add_subcommand("evaluate", "Full-reference metrics over a paired manifest");
  ev->add_option("--pairs", vo.pairs, "Manifest with clean counterparts")->required()->check(CLI::ExistingFile);
  ev->add_option("--metrics", vo.metrics, "Comma-separated: psnr, ssim, msssim")->capture_default_str();
  ev->add_option("--threads", vo.threads, "Worker threads");
  ev->add_option("--report", vo.report, "Report CSV (default: evaluation.csv next to the manifest)");

  std::string root, labels, mout;
  auto *man = app.add_subcommand("manifest", "Index a directory of images");
  man->add_option("--root", root, "Image directory")->required();
  man->add_option("--labels", labels, "filename,grade CSV");
  man->add_option("--output", mout, "Manifest file (JSON lines)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*enh) {
      if (!eo.identity && eo.weights.empty())
        throw Failure(OTRE_ERR_INVALID_ARGUMENT, "enhance needs --weights or --identity");
      return cmd_enhance(eo);
    }
    if (*deg)
      return cmd_degrade(dopt, *deg);
    if (*ev)
      return cmd_evaluate(vo);
    if (*man)
      return cmd_manifest(root, labels, mout);
  } catch (const Failure &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
