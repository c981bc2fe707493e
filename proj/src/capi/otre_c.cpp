#include "otre/otre.h"

#include "otre/degrade.hpp"
#include "otre/error.hpp"
#include "otre/generator.hpp"
#include "otre/metrics.hpp"
#include "otre/refine.hpp"

#include <cstring>
#include <deque>
#include <new>
#include <optional>
#include <string>

struct otre_image {
  otre::ImageTensor img;
};

struct otre_generator {
  otre::Generator gen;
};

struct otre_manifest {
  otre::DatasetManifest m;
  // Stable storage for strings handed out by otre_manifest_entry_get.
  std::deque<std::string> paths, cleans;

  void sync() {
    paths.clear();
    cleans.clear();
    for (const auto &e : m.entries) {
      paths.push_back(e.path.string());
      cleans.push_back(e.clean_path ? e.clean_path->string() : std::string());
    }
  }
};

static_assert(int(otre::ErrorCode::Ok) == OTRE_OK);
static_assert(int(otre::ErrorCode::LipschitzViolation) == OTRE_ERR_LIPSCHITZ_VIOLATION);
static_assert(int(otre::ErrorCode::UnknownMetric) == OTRE_ERR_UNKNOWN_METRIC);
static_assert(int(otre::ErrorCode::Internal) == OTRE_ERR_INTERNAL);

namespace {

thread_local std::string g_last_error;

otre_status set_error(otre_status s, const char *msg) {
  g_last_error = msg;
  return s;
}

template <class F> otre_status guarded(F &&f) noexcept {
  try {
    f();
    return OTRE_OK;
  } catch (const otre::Error &e) {
    return set_error(static_cast<otre_status>(e.code()), e.what());
  } catch (const std::bad_alloc &) {
    return set_error(OTRE_ERR_INTERNAL, "out of memory");
  } catch (const std::exception &e) {
    return set_error(OTRE_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(OTRE_ERR_INTERNAL, "unknown error");
  }
}

void require(const void *p, const char *what) {
  if (!p)
    otre::fail(otre::ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

otre::SsimParams to_cpp(const otre_ssim_params *p) {
  otre::SsimParams s;
  if (!p)
    return s;
  if (p->num_scales < 1 || p->num_scales > 8)
    otre::fail(otre::ErrorCode::InvalidArgument, "num_scales must be in [1, 8]");
  s.window_size = p->window_size;
  s.window_sigma = p->window_sigma;
  s.k1 = p->k1;
  s.k2 = p->k2;
  s.dynamic_range = p->dynamic_range;
  s.scale_weights.assign(p->scale_weights, p->scale_weights + p->num_scales);
  return s;
}

otre::ReConfig to_cpp(const otre_re_config *c) {
  otre::ReConfig r;
  if (!c)
    return r;
  r.eta = c->eta;
  r.gamma = c->gamma;
  r.tol = c->tol;
  r.max_iters = c->max_iters;
  r.fidelity = c->fidelity == OTRE_FIDELITY_QUADRATIC ? otre::Fidelity::Quadratic : otre::Fidelity::MsSsim;
  r.clamp = c->clamp != 0;
  r.max_step_halvings = c->max_step_halvings;
  return r;
}

void fill_report(const otre::ReResult &r, double gamma, otre_re_report *rep) {
  if (!rep)
    return;
  rep->iters = r.iters;
  rep->converged = r.converged ? 1 : 0;
  rep->diverged = r.diverged ? 1 : 0;
  rep->eta_used = r.eta_used;
  rep->gamma = gamma;
  rep->stationarity_residual = r.stationarity_residual;
}

otre_image *wrap(otre::ImageTensor img) { return new otre_image{std::move(img)}; }

} // namespace

extern "C" {

const char *otre_version(void) { return "1.0.0"; }

const char *otre_last_error(void) { return g_last_error.c_str(); }

const char *otre_status_name(otre_status status) {
  return otre::error_code_name(static_cast<otre::ErrorCode>(status));
}

// ---- images ----------------------------------------------------------------

otre_status otre_image_load(const char *path, otre_image **out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = wrap(otre::load_image(path));
  });
}

otre_status otre_image_save(const otre_image *img, const char *path) {
  return guarded([&] {
    require(img, "img");
    require(path, "path");
    otre::save_image(img->img, path);
  });
}

otre_status otre_image_create(int channels, int height, int width, const double *data, otre_image **out) {
  return guarded([&] {
    require(out, "out");
    otre::ImageTensor t(channels, height, width);
    if (data)
      std::memcpy(t.data().data(), data, t.size() * sizeof(double));
    *out = wrap(std::move(t));
  });
}

otre_status otre_image_clone(const otre_image *img, otre_image **out) {
  return guarded([&] {
    require(img, "img");
    require(out, "out");
    *out = wrap(img->img);
  });
}

void otre_image_free(otre_image *img) { delete img; }

otre_status otre_image_shape(const otre_image *img, int *channels, int *height, int *width) {
  return guarded([&] {
    require(img, "img");
    if (channels)
      *channels = img->img.channels();
    if (height)
      *height = img->img.height();
    if (width)
      *width = img->img.width();
  });
}

const double *otre_image_data(const otre_image *img) { return img ? img->img.data().data() : nullptr; }

otre_status otre_preprocess(const otre_image *img, int side, otre_image **out) {
  return guarded([&] {
    require(img, "img");
    require(out, "out");
    *out = wrap(otre::preprocess(img->img, side));
  });
}

// ---- metrics ---------------------------------------------------------------

void otre_ssim_params_default(otre_ssim_params *p) {
  if (!p)
    return;
  const otre::SsimParams d;
  p->window_size = d.window_size;
  p->window_sigma = d.window_sigma;
  p->k1 = d.k1;
  p->k2 = d.k2;
  p->dynamic_range = d.dynamic_range;
  p->num_scales = int(d.scale_weights.size());
  std::fill(std::begin(p->scale_weights), std::end(p->scale_weights), 0.0);
  std::copy(d.scale_weights.begin(), d.scale_weights.end(), p->scale_weights);
}

otre_status otre_psnr(const otre_image *a, const otre_image *b, double *out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    *out = otre::psnr(a->img, b->img);
  });
}

otre_status otre_ssim(const otre_image *a, const otre_image *b, const otre_ssim_params *p, double *out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    *out = otre::ssim(a->img, b->img, to_cpp(p));
  });
}

otre_status otre_ms_ssim(const otre_image *a, const otre_image *b, const otre_ssim_params *p, double *value,
                         otre_image **grad) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(value, "value");
    auto r = otre::ms_ssim_with_grad(a->img, b->img, to_cpp(p));
    *value = r.value;
    if (grad)
      *grad = wrap(std::move(r.grad));
  });
}

// ---- generator -------------------------------------------------------------

otre_status otre_generator_load(const char *path, int check_spectral_norm, otre_generator **out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    otre::LoadOptions opts;
    opts.check_spectral_norm = check_spectral_norm != 0;
    *out = new otre_generator{otre::Generator::load(path, opts)};
  });
}

otre_status otre_generator_identity(int image_channels, otre_generator **out) {
  return guarded([&] {
    require(out, "out");
    *out = new otre_generator{otre::Generator::identity(image_channels)};
  });
}

void otre_generator_free(otre_generator *g) { delete g; }

otre_status otre_generator_info_get(const otre_generator *g, otre_generator_info *info) {
  return guarded([&] {
    require(g, "g");
    require(info, "info");
    const auto &s = g->gen.spec();
    info->depth = s.depth;
    info->base_channels = s.base_channels;
    info->eca_gamma = s.eca_gamma;
    info->eca_b = s.eca_b;
    info->residual_output = s.residual_output ? 1 : 0;
    info->image_channels = s.image_channels;
    info->normalize = s.normalize ? 1 : 0;
    info->record_count = g->gen.weights().records.size();
  });
}

otre_status otre_generator_arch_id(const otre_generator *g, char *buf, size_t buf_len, size_t *needed) {
  return guarded([&] {
    require(g, "g");
    const std::string &id = g->gen.weights().arch_id;
    if (needed)
      *needed = id.size() + 1;
    if (buf && buf_len > 0) {
      const std::size_t n = std::min(buf_len - 1, id.size());
      std::memcpy(buf, id.data(), n);
      buf[n] = '\0';
    }
  });
}

otre_status otre_generator_forward(const otre_generator *g, const otre_image *x, otre_image **out) {
  return guarded([&] {
    require(g, "g");
    require(x, "x");
    require(out, "out");
    *out = wrap(g->gen.forward(x->img));
  });
}

otre_status otre_generator_export(const otre_generator *g, const char *path) {
  return guarded([&] {
    require(g, "g");
    require(path, "path");
    otre::write_weights(g->gen.weights(), path);
  });
}

// ---- regularization by enhancing ------------------------------------------

void otre_re_config_default(otre_re_config *cfg) {
  if (!cfg)
    return;
  const otre::ReConfig d;
  cfg->eta = d.eta;
  cfg->gamma = d.gamma;
  cfg->tol = d.tol;
  cfg->max_iters = d.max_iters;
  cfg->fidelity = OTRE_FIDELITY_MS_SSIM;
  cfg->clamp = d.clamp ? 1 : 0;
  cfg->max_step_halvings = d.max_step_halvings;
}

otre_status otre_refine(const otre_image *y, const otre_image *x0, const otre_generator *g, const otre_re_config *cfg,
                        const char *trace_csv, otre_image **out, otre_re_report *report) {
  return guarded([&] {
    require(y, "y");
    require(g, "g");
    require(out, "out");
    const otre::ReConfig c = to_cpp(cfg);
    const otre::ImageTensor start = x0 ? x0->img : g->gen.forward(y->img);
    otre::ReResult r = otre::refine(y->img, start, c, g->gen);
    if (trace_csv)
      otre::write_trace_csv(r, trace_csv);
    fill_report(r, c.gamma, report);
    *out = wrap(std::move(r.x_star));
  });
}

otre_status otre_gamma_grid_search(const otre_image *y, const otre_image *x0, const otre_generator *g,
                                   const otre_re_config *cfg, const double *gammas, size_t n_gammas,
                                   const otre_image *reference, otre_image **out, otre_re_report *report) {
  return guarded([&] {
    require(y, "y");
    require(g, "g");
    require(out, "out");
    if (n_gammas > 0)
      require(gammas, "gammas");
    const otre::ImageTensor start = x0 ? x0->img : g->gen.forward(y->img);
    std::vector<double> grid(gammas, gammas + n_gammas);
    auto r = otre::gamma_grid_search(y->img, start, grid, to_cpp(cfg), g->gen, reference ? &reference->img : nullptr);
    fill_report(r.result, r.gamma, report);
    *out = wrap(std::move(r.result.x_star));
  });
}

// ---- degradation and manifests --------------------------------------------

void otre_degrade_params_default(otre_degrade_params *p) {
  if (!p)
    return;
  const otre::DegradeParams d;
  p->blur_sigma = d.blur_sigma;
  p->illum_strength = d.illum_strength;
  p->brightness_shift = d.brightness_shift;
  p->contrast_scale = d.contrast_scale;
  p->noise_std = d.noise_std;
  p->center_jitter = d.center_jitter;
  p->seed = d.seed;
}

otre_status otre_degrade(const otre_image *x, const otre_degrade_params *p, otre_image **out) {
  return guarded([&] {
    require(x, "x");
    require(p, "p");
    require(out, "out");
    otre::DegradeParams d;
    d.blur_sigma = p->blur_sigma;
    d.illum_strength = p->illum_strength;
    d.brightness_shift = p->brightness_shift;
    d.contrast_scale = p->contrast_scale;
    d.noise_std = p->noise_std;
    d.center_jitter = p->center_jitter;
    d.seed = p->seed;
    *out = wrap(otre::degrade(x->img, d));
  });
}

uint64_t otre_image_checksum(const otre_image *img) { return img ? otre::image_checksum(img->img) : 0; }

otre_status otre_manifest_create(otre_manifest **out) {
  return guarded([&] {
    require(out, "out");
    *out = new otre_manifest{};
  });
}

otre_status otre_manifest_build(const char *root, const char *labels_csv, otre_manifest **out) {
  return guarded([&] {
    require(root, "root");
    require(out, "out");
    std::optional<std::filesystem::path> labels;
    if (labels_csv)
      labels = labels_csv;
    auto *m = new otre_manifest{otre::build_manifest(root, labels), {}, {}};
    m->sync();
    *out = m;
  });
}

otre_status otre_manifest_load(const char *path, otre_manifest **out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto *m = new otre_manifest{otre::DatasetManifest::load(path), {}, {}};
    m->sync();
    *out = m;
  });
}

otre_status otre_manifest_save(const otre_manifest *m, const char *path) {
  return guarded([&] {
    require(m, "m");
    require(path, "path");
    m->m.save(path);
  });
}

void otre_manifest_free(otre_manifest *m) { delete m; }

size_t otre_manifest_size(const otre_manifest *m) { return m ? m->m.entries.size() : 0; }

otre_status otre_manifest_entry_get(const otre_manifest *m, size_t index, otre_manifest_entry *entry) {
  return guarded([&] {
    require(m, "m");
    require(entry, "entry");
    if (index >= m->m.entries.size())
      otre::fail(otre::ErrorCode::InvalidArgument, "manifest index out of range");
    const auto &e = m->m.entries[index];
    entry->path = m->paths[index].c_str();
    entry->label = static_cast<otre_quality>(e.label);
    entry->has_grade = e.grade ? 1 : 0;
    entry->grade = e.grade.value_or(0);
    entry->clean_path = e.clean_path ? m->cleans[index].c_str() : nullptr;
  });
}

otre_status otre_manifest_append(otre_manifest *m, const otre_manifest_entry *entry) {
  return guarded([&] {
    require(m, "m");
    require(entry, "entry");
    require(entry->path, "entry->path");
    if (entry->label < OTRE_QUALITY_GOOD || entry->label > OTRE_QUALITY_SYNTHETIC_LOW)
      otre::fail(otre::ErrorCode::InvalidArgument, "unknown quality label");
    otre::ManifestEntry e;
    e.path = entry->path;
    e.label = static_cast<otre::QualityLabel>(entry->label);
    if (entry->has_grade)
      e.grade = entry->grade;
    if (entry->clean_path)
      e.clean_path = entry->clean_path;
    m->m.entries.push_back(std::move(e));
    m->paths.push_back(m->m.entries.back().path.string());
    m->cleans.push_back(entry->clean_path ? entry->clean_path : "");
  });
}

size_t otre_manifest_warning_count(const otre_manifest *m) { return m ? m->m.warnings.size() : 0; }

const char *otre_manifest_warning(const otre_manifest *m, size_t index) {
  if (!m || index >= m->m.warnings.size())
    return nullptr;
  return m->m.warnings[index].c_str();
}

} // extern "C"
