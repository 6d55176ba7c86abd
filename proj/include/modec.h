#ifndef MODEC_H
#define MODEC_H

/* C interface to the modec compression engine. All functions return a
 * modec_status; on failure modec_last_error() describes what went wrong.
 * Strings handed back through out-parameters are heap copies owned by the
 * caller and must be released with modec_string_free(). */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum modec_status {
  MODEC_OK = 0,
  MODEC_ERR_ARG = 1,      /* null pointer or malformed request payload */
  MODEC_ERR_IO = 2,       /* file or serialization failure */
  MODEC_ERR_SHAPE = 3,    /* dimension mismatch */
  MODEC_ERR_NUMERIC = 4,  /* non-finite data, PSD violation, rank trouble */
  MODEC_ERR_CONFIG = 5,   /* invalid parameter or target */
  MODEC_ERR_INTERNAL = 6, /* unexpected failure */
} modec_status;

/* Opaque dense decoder model handle. */
typedef struct modec_model modec_model;

/* Message for the most recent failure on the calling thread ("" if none).
 * The pointer stays valid until the next call on the same thread. */
const char* modec_last_error(void);

void modec_string_free(char* s);

void modec_model_free(modec_model* model);

/* Model directory layout: model.json manifest plus one MDG1 tensor blob per
 * weight. Loading tolerates compressed shapes. */
modec_status modec_model_load(const char* dir, modec_model** out_model);
modec_status modec_model_save(const modec_model* model, const char* dir);

modec_status modec_model_param_count(const modec_model* model, long long* out_count);

typedef struct modec_toy_params {
  int d_hidden;
  int d_intermediate;
  int n_heads;
  int n_kv_heads;            /* below n_heads shares key/value heads */
  int n_layers;
  const char* activation;    /* "silu_gated" | "relu" | "gelu"; NULL = silu_gated */
  uint64_t seed;
  double gain_lo;            /* first-layer weight gain; <= 0 means 1.0 */
  double gain_hi;            /* last-layer weight gain; <= 0 means 1.0 */
} modec_toy_params;

/* Seeded random decoder for calibration experiments. */
modec_status modec_model_gen_toy(const modec_toy_params* params, modec_model** out_model);

typedef struct modec_compress_params {
  double sparsity;           /* target average sparsity in [0, 1) */
  const char* alloc_mode;    /* "uniform" | "global" | "refined"; NULL = uniform */
  double epsilon;            /* allocation temperature; <= 0 means 1.0 */
  int autotune;              /* nonzero: pick epsilon from the layer scores */
  double max_layer_sparsity; /* autotune peak target; <= 0 means 0.8 */
  double lambda_ridge;       /* ridge parameter for channel scores; <= 0 means 1.0 */
  uint64_t seed;             /* calibration data seed */
  int calib_n;               /* calibration samples; <= 0 means 8 */
  int calib_t;               /* tokens per sample; <= 0 means 32 */
  int gqa;                   /* run ungrouped models through the grouped path */
  int clamp;                 /* cap over-unit sparsities instead of failing */
  int propagate;             /* re-capture statistics through compressed layers */
  int timings;               /* include wall times in the report */
} modec_compress_params;

/* Compress every layer's three weight pairs. Either output may be NULL when
 * the caller only wants the other. The report is a JSON document. */
modec_status modec_model_compress(const modec_model* model, const modec_compress_params* params,
                                  modec_model** out_model, char** out_report_json);

/* Seeded-calibration comparison of two models with the same hidden width.
 * Metrics JSON: {"layer_mse": [...], "e2e_mse": ..., "cosine": ...}. */
modec_status modec_eval_models(const modec_model* original, const modec_model* compressed,
                               int calib_n, int calib_t, uint64_t seed,
                               char** out_metrics_json);

/* Standalone sparsity allocation. Request JSON:
 *   {"scores": [...], "phi_avg": 0.3, "epsilon": 1.0 | "auto",
 *    "scores_mha": [...],          // optional; switches to the per-block form
 *    "max_layer_sparsity": 0.8,    // optional; used with "auto"
 *    "clamp": false}               // optional
 * The plan JSON mirrors the plan serialization used in compression reports. */
modec_status modec_allocate_json(const char* request_json, char** out_plan_json);

#ifdef __cplusplus
}
#endif

#endif /* MODEC_H */
