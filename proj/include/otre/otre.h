/*
 * otre.h - C interface to the OTRE retinal image enhancement library.
 *
 * All objects are opaque handles created by otre_*_create/load functions and
 * released with the matching otre_*_free. Every fallible call returns an
 * otre_status; on failure a thread-local message is available through
 * otre_last_error() until the next failing call on the same thread.
 *
 * Images are planar channels x height x width doubles, normally in [0, 1].
 * Handles are immutable once created (except manifests while being built),
 * so they may be shared across threads for reading.
 */
#ifndef OTRE_OTRE_H_
#define OTRE_OTRE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(OTRE_BUILDING_DLL)
#    define OTRE_API __declspec(dllexport)
#  else
#    define OTRE_API __declspec(dllimport)
#  endif
#else
#  define OTRE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum otre_status {
  OTRE_OK = 0,
  OTRE_ERR_MISSING_FILE = 1,
  OTRE_ERR_UNSUPPORTED_FORMAT = 2,
  OTRE_ERR_CORRUPT_DATA = 3,
  OTRE_ERR_SHAPE_MISMATCH = 4,
  OTRE_ERR_TOO_SMALL = 5,
  OTRE_ERR_BAD_MAGIC = 6,
  OTRE_ERR_VERSION_UNSUPPORTED = 7,
  OTRE_ERR_NON_FINITE_PARAM = 8,
  OTRE_ERR_LIPSCHITZ_VIOLATION = 9,
  OTRE_ERR_NON_FINITE_ITERATE = 10,
  OTRE_ERR_EMPTY_GRID = 11,
  OTRE_ERR_MISSING_DIR = 12,
  OTRE_ERR_MALFORMED_LABELS = 13,
  OTRE_ERR_UNKNOWN_METRIC = 14,
  OTRE_ERR_INVALID_ARGUMENT = 15,
  OTRE_ERR_IO = 16,
  OTRE_ERR_INTERNAL = 17
} otre_status;

typedef struct otre_image otre_image;
typedef struct otre_generator otre_generator;
typedef struct otre_manifest otre_manifest;

OTRE_API const char *otre_version(void);
OTRE_API const char *otre_last_error(void);
OTRE_API const char *otre_status_name(otre_status status);

/* ---- images ------------------------------------------------------------ */

OTRE_API otre_status otre_image_load(const char *path, otre_image **out);
OTRE_API otre_status otre_image_save(const otre_image *img, const char *path);
/* Copies channels*height*width planar values from `data` (may be NULL: zeros). */
OTRE_API otre_status otre_image_create(int channels, int height, int width, const double *data, otre_image **out);
OTRE_API otre_status otre_image_clone(const otre_image *img, otre_image **out);
OTRE_API void otre_image_free(otre_image *img);
OTRE_API otre_status otre_image_shape(const otre_image *img, int *channels, int *height, int *width);
/* Borrowed pointer to the planar buffer, valid for the lifetime of `img`. */
OTRE_API const double *otre_image_data(const otre_image *img);
OTRE_API otre_status otre_preprocess(const otre_image *img, int side, otre_image **out);

/* ---- metrics ----------------------------------------------------------- */

typedef struct otre_ssim_params {
  int window_size;        /* default 11 */
  double window_sigma;    /* default 1.5 */
  double k1, k2;          /* defaults 0.01, 0.03 */
  double dynamic_range;   /* default 1 */
  int num_scales;         /* number of entries used in scale_weights, <= 8 */
  double scale_weights[8];
} otre_ssim_params;

OTRE_API void otre_ssim_params_default(otre_ssim_params *p);

OTRE_API otre_status otre_psnr(const otre_image *a, const otre_image *b, double *out);
/* `p` may be NULL for the defaults. */
OTRE_API otre_status otre_ssim(const otre_image *a, const otre_image *b, const otre_ssim_params *p, double *out);
/* `grad` may be NULL; otherwise it receives a new image with d(value)/d(a). */
OTRE_API otre_status otre_ms_ssim(const otre_image *a, const otre_image *b, const otre_ssim_params *p, double *value,
                                  otre_image **grad);

/* ---- generator --------------------------------------------------------- */

typedef struct otre_generator_info {
  int depth;
  int base_channels;
  int eca_gamma;
  int eca_b;
  int residual_output;
  int image_channels;
  int normalize;
  size_t record_count;
} otre_generator_info;

/* check_spectral_norm != 0 rejects conv layers whose top singular value
 * exceeds 1 + 1e-3 (OTRE_ERR_LIPSCHITZ_VIOLATION). */
OTRE_API otre_status otre_generator_load(const char *path, int check_spectral_norm, otre_generator **out);
/* Zero-weight residual generator: forward(x) == x. */
OTRE_API otre_status otre_generator_identity(int image_channels, otre_generator **out);
OTRE_API void otre_generator_free(otre_generator *g);
OTRE_API otre_status otre_generator_info_get(const otre_generator *g, otre_generator_info *info);
/* Size of arch id including the terminating NUL is written to *needed. */
OTRE_API otre_status otre_generator_arch_id(const otre_generator *g, char *buf, size_t buf_len, size_t *needed);
/* Input sides must be divisible by 2^depth. */
OTRE_API otre_status otre_generator_forward(const otre_generator *g, const otre_image *x, otre_image **out);
/* Re-encodes the loaded weights; byte-identical to the file that was loaded. */
OTRE_API otre_status otre_generator_export(const otre_generator *g, const char *path);

/* ---- regularization by enhancing -------------------------------------- */

typedef enum otre_fidelity { OTRE_FIDELITY_MS_SSIM = 0, OTRE_FIDELITY_QUADRATIC = 1 } otre_fidelity;

typedef struct otre_re_config {
  double eta;              /* default 0.1 */
  double gamma;            /* default 0 */
  double tol;              /* default 1e-4 */
  int max_iters;           /* default 400 */
  otre_fidelity fidelity;  /* default MS-SSIM */
  int clamp;               /* default 1 */
  int max_step_halvings;   /* default 8 */
} otre_re_config;

typedef struct otre_re_report {
  int iters;
  int converged;
  int diverged;
  double eta_used;
  double gamma;
  double stationarity_residual;
} otre_re_report;

OTRE_API void otre_re_config_default(otre_re_config *cfg);

/* x0 may be NULL, meaning x0 = G(y). trace_csv may be NULL. */
OTRE_API otre_status otre_refine(const otre_image *y, const otre_image *x0, const otre_generator *g,
                                 const otre_re_config *cfg, const char *trace_csv, otre_image **out,
                                 otre_re_report *report);

/* Refines once per gamma and keeps the best run: highest PSNR against
 * `reference` when given, otherwise the smallest stationarity residual.
 * report->gamma holds the selected value. */
OTRE_API otre_status otre_gamma_grid_search(const otre_image *y, const otre_image *x0, const otre_generator *g,
                                            const otre_re_config *cfg, const double *gammas, size_t n_gammas,
                                            const otre_image *reference, otre_image **out, otre_re_report *report);

/* ---- degradation and manifests ---------------------------------------- */

typedef struct otre_degrade_params {
  double blur_sigma;
  double illum_strength;
  double brightness_shift;
  double contrast_scale;
  double noise_std;
  double center_jitter;
  uint64_t seed;
} otre_degrade_params;

/* Neutral parameters (identity degradation) with the default center jitter. */
OTRE_API void otre_degrade_params_default(otre_degrade_params *p);
OTRE_API otre_status otre_degrade(const otre_image *x, const otre_degrade_params *p, otre_image **out);
OTRE_API uint64_t otre_image_checksum(const otre_image *img);

typedef enum otre_quality {
  OTRE_QUALITY_GOOD = 0,
  OTRE_QUALITY_USABLE = 1,
  OTRE_QUALITY_REJECT = 2,
  OTRE_QUALITY_SYNTHETIC_LOW = 3
} otre_quality;

typedef struct otre_manifest_entry {
  const char *path;
  otre_quality label;
  int has_grade;
  int grade;
  const char *clean_path; /* NULL when absent */
} otre_manifest_entry;

OTRE_API otre_status otre_manifest_create(otre_manifest **out);
/* labels_csv may be NULL. */
OTRE_API otre_status otre_manifest_build(const char *root, const char *labels_csv, otre_manifest **out);
OTRE_API otre_status otre_manifest_load(const char *path, otre_manifest **out);
OTRE_API otre_status otre_manifest_save(const otre_manifest *m, const char *path);
OTRE_API void otre_manifest_free(otre_manifest *m);
OTRE_API size_t otre_manifest_size(const otre_manifest *m);
/* Strings in `entry` are borrowed from the manifest. */
OTRE_API otre_status otre_manifest_entry_get(const otre_manifest *m, size_t index, otre_manifest_entry *entry);
OTRE_API otre_status otre_manifest_append(otre_manifest *m, const otre_manifest_entry *entry);
OTRE_API size_t otre_manifest_warning_count(const otre_manifest *m);
OTRE_API const char *otre_manifest_warning(const otre_manifest *m, size_t index);

#ifdef __cplusplus
}
#endif

#endif /* OTRE_OTRE_H_ */
