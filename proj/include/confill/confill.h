#ifndef CONFILL_CONFILL_H
#define CONFILL_CONFILL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#if defined(CONFILL_BUILDING_LIBRARY)
#define CONFILL_API __declspec(dllexport)
#else
#define CONFILL_API __declspec(dllimport)
#endif
#else
#define CONFILL_API __attribute__((visibility("default")))
#endif

/* Every function returns a status; on failure cf_last_error() describes it. */
typedef enum cf_status {
  CF_OK = 0,
  CF_ERR_ARGUMENT = 1, /* null handle or malformed argument */
  CF_ERR_CONFIG = 2,   /* invalid tunable or unknown name */
  CF_ERR_CONTRACT = 3, /* precondition violated (shape mismatch, ...) */
  CF_ERR_PARSE = 4,    /* malformed file contents */
  CF_ERR_IO = 5,       /* file could not be read or written */
  CF_ERR_NUMERIC = 6,  /* divergence or non-finite refinement */
  CF_ERR_INTERNAL = 7
} cf_status;

typedef struct cf_config cf_config;
typedef struct cf_image cf_image;
typedef struct cf_mask cf_mask;
typedef struct cf_model cf_model;
typedef struct cf_gamma cf_gamma;
typedef struct cf_result cf_result;

/* Message of the most recent failure on the calling thread. */
CONFILL_API const char* cf_last_error(void);
CONFILL_API const char* cf_version(void);
CONFILL_API void cf_string_free(char* s);

/* Configuration (JSON with sections seed, features, schedule, train,
 * sampler, dataset, paths). */
CONFILL_API cf_status cf_config_new(cf_config** out);
CONFILL_API cf_status cf_config_from_json(const char* json, cf_config** out);
CONFILL_API cf_status cf_config_merge_json(cf_config* cfg, const char* json_patch);
CONFILL_API cf_status cf_config_to_json(const cf_config* cfg, char** out);
CONFILL_API void cf_config_free(cf_config* cfg);

/* Images: row-major doubles. */
CONFILL_API cf_status cf_image_create(int width, int height, const double* data, cf_image** out);
CONFILL_API cf_status cf_image_load_pgm(const char* path, cf_image** out);
CONFILL_API cf_status cf_image_save_pgm(const cf_image* img, const char* path);
CONFILL_API cf_status cf_image_size(const cf_image* img, int* width, int* height);
CONFILL_API cf_status cf_image_copy_data(const cf_image* img, double* out, size_t count);
CONFILL_API void cf_image_free(cf_image* img);

/* Toy data: image `index` of the dataset described by (count, size, seed,
 * kinds). `kinds` is a comma-separated list or NULL for all. */
CONFILL_API cf_status cf_dataset_image(int count, int size, uint64_t seed, const char* kinds, int index,
                                       cf_image** out);
CONFILL_API cf_status cf_toy_image(const char* kind, uint64_t seed, int size, cf_image** out);

/* Masks: nonzero = known. */
CONFILL_API cf_status cf_mask_create(int width, int height, const unsigned char* known, cf_mask** out);
CONFILL_API cf_status cf_mask_make(const char* kind, uint64_t seed, int size, cf_mask** out);
CONFILL_API cf_status cf_mask_load_pgm(const char* path, cf_mask** out);
CONFILL_API cf_status cf_mask_save_pgm(const cf_mask* mask, const char* path);
CONFILL_API cf_status cf_mask_unknown_fraction(const cf_mask* mask, double* out);
CONFILL_API void cf_mask_free(cf_mask* mask);

/* Denoiser. The progress callback receives (step, total, loss, user). */
typedef void (*cf_train_progress)(int step, int total, double loss, void* user);
CONFILL_API cf_status cf_model_train(const cf_config* cfg, const cf_image* const* images, size_t count,
                                     cf_train_progress progress, void* user, cf_model** out, double* final_loss);
CONFILL_API cf_status cf_model_load(const char* path, cf_model** out);
CONFILL_API cf_status cf_model_save(const cf_model* model, const char* path);
CONFILL_API cf_status cf_model_steps(const cf_model* model, int* steps);
CONFILL_API void cf_model_free(cf_model* model);

/* Calibration. `method` selects the constraint (confill_cad, confill_wd,
 * confill_l2). With `oracle` nonzero the true noise replaces the network
 * and `model` may be NULL (the schedule then comes from the config). When
 * `images` is NULL a toy calibration set of `size` pixels is drawn. */
CONFILL_API cf_status cf_gamma_calibrate(const cf_model* model, const cf_config* cfg, const char* method,
                                         const cf_image* const* images, size_t count, int size, int oracle,
                                         cf_gamma** out);
CONFILL_API cf_status cf_gamma_load(const char* path, cf_gamma** out);
CONFILL_API cf_status cf_gamma_save(const cf_gamma* gamma, const char* path);
CONFILL_API cf_status cf_gamma_get(const cf_gamma* gamma, int t, double* out);
CONFILL_API cf_status cf_gamma_steps(const cf_gamma* gamma, int* steps);
CONFILL_API void cf_gamma_free(cf_gamma* gamma);

/* Inpainting with method confill_cad, confill_wd, confill_l2 or blend.
 * `gamma` may be NULL (calibrated on the fly). */
CONFILL_API cf_status cf_inpaint(const cf_model* model, const cf_config* cfg, const cf_image* image,
                                 const cf_mask* mask, const char* method, uint64_t seed, const cf_gamma* gamma,
                                 cf_result** out);
CONFILL_API cf_status cf_result_output(const cf_result* result, cf_image** out);
CONFILL_API cf_status cf_result_raw(const cf_result* result, cf_image** out);
CONFILL_API cf_status cf_result_steps(const cf_result* result, int* steps, int* jumps);
CONFILL_API cf_status cf_result_save_trace(const cf_result* result, const char* path);
CONFILL_API void cf_result_free(cf_result* result);

/* Benchmark sweep. `masks` and `methods` are comma-separated lists (an empty
 * method list yields a header-only CSV). `gamma_cad` may be NULL. */
typedef void (*cf_bench_progress)(size_t done, size_t total, void* user);
CONFILL_API cf_status cf_bench(const cf_model* model, const cf_config* cfg, const cf_image* const* images,
                               size_t count, const char* masks, const char* methods, uint64_t seed, int jobs,
                               int record_timing, const cf_gamma* gamma_cad, const char* csv_path,
                               const char* summary_path, cf_bench_progress progress, void* user);

/* Writes <prefix>_weight.pgm, _variance.pgm, _edge.pgm, _samples.pgm (per
 * cell values scaled affinely to [0,255]) and returns the scales as JSON. */
CONFILL_API cf_status cf_features_dump(const cf_config* cfg, const cf_image* image, const cf_mask* mask,
                                       const char* prefix, char** scales_json);

#ifdef __cplusplus
}
#endif

#endif /* CONFILL_CONFILL_H */
