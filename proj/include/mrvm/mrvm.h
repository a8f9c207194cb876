/* Copyright 2026 The mrvm Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the mrvm library: scene generation, pretraining and
 * finetuning, rendering, evaluation, gradient audits and ablation sweeps.
 *
 * Every function returns an mrvm_status. On failure the message is kept
 * per thread and can be read with mrvm_last_error(). Strings returned
 * through char** out-parameters are owned by the caller and released with
 * mrvm_string_free().
 */
#ifndef MRVM_MRVM_H
#define MRVM_MRVM_H

#include <stddef.h>
#include <stdint.h>

#if defined(MRVM_BUILDING_LIBRARY)
#define MRVM_API __attribute__((visibility("default")))
#else
#define MRVM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mrvm_status {
  MRVM_OK = 0,
  MRVM_ERR_USAGE = 1,   /* bad argument, unknown key, out-of-range value */
  MRVM_ERR_DATA = 2,    /* missing or corrupt file, I/O failure */
  MRVM_ERR_NUMERIC = 3  /* non-finite values, failed gradient audit */
} mrvm_status;

typedef struct mrvm_config mrvm_config;
typedef struct mrvm_model mrvm_model;

typedef void (*mrvm_log_fn)(const char* message, void* user);

MRVM_API const char* mrvm_version(void);
MRVM_API const char* mrvm_last_error(void);
MRVM_API void mrvm_string_free(char* s);
/* Progress messages from long-running calls; NULL disables them. */
MRVM_API void mrvm_set_log(mrvm_log_fn fn, void* user);

/* Training configuration (JSON object; model fields nested under "model"). */
MRVM_API mrvm_status mrvm_config_new(mrvm_config** out);
MRVM_API mrvm_status mrvm_config_parse(const char* json, mrvm_config** out);
MRVM_API mrvm_status mrvm_config_load(const char* path, mrvm_config** out);
/* value is JSON when it parses as JSON, a bare string otherwise;
 * "model.<field>" addresses model fields. */
MRVM_API mrvm_status mrvm_config_set(mrvm_config* config, const char* key, const char* value);
MRVM_API mrvm_status mrvm_config_dump(const mrvm_config* config, char** out_json);
MRVM_API void mrvm_config_free(mrvm_config* config);

/* Writes `count` scene directories named scene_000, scene_001, ... under
 * out_dir. gen_config_json may be NULL for defaults. A non-empty out_dir is
 * refused unless force is set. summary_json (optional) lists the scenes. */
MRVM_API mrvm_status mrvm_gen_scenes(const char* gen_config_json, const char* out_dir, int count, uint64_t seed,
                                     int force, int threads, char** summary_json);

/* phase: "pretrain" or "finetune". init_checkpoint (optional) seeds a
 * finetune run from a pretraining checkpoint. With resume set, a checkpoint
 * already in out_dir is continued. */
MRVM_API mrvm_status mrvm_train(const mrvm_config* config, const char* phase, const char* const* scene_dirs,
                                size_t n_scenes, const char* init_checkpoint, const char* out_dir, int resume,
                                int threads, char** summary_json);

MRVM_API mrvm_status mrvm_model_load(const char* checkpoint, mrvm_model** out);
MRVM_API void mrvm_model_free(mrvm_model* model);
/* Renders one view of a scene with the fine branch and writes a PPM. */
MRVM_API mrvm_status mrvm_model_render(const mrvm_model* model, const char* scene_dir, int view, const char* out_ppm,
                                       int threads);
/* Evaluates the test views of each scene; writes <out_prefix>.csv and
 * <out_prefix>.json when out_prefix is given. */
MRVM_API mrvm_status mrvm_model_evaluate(const mrvm_model* model, const char* const* scene_dirs, size_t n_scenes,
                                         const char* out_prefix, int threads, char** report_json);

/* Finite-difference audit of every op and of the full pipeline. Returns
 * MRVM_ERR_NUMERIC when any check exceeds the tolerance. */
MRVM_API mrvm_status mrvm_gradcheck(uint64_t seed, char** report_json);

MRVM_API mrvm_status mrvm_ablate_mask(const mrvm_config* pretrain, const mrvm_config* finetune, const double* ratios,
                                      size_t n_ratios, const char* const* train_dirs, size_t n_train,
                                      const char* const* eval_dirs, size_t n_eval, const char* out_dir, int threads,
                                      char** csv);
MRVM_API mrvm_status mrvm_ablate_fewshot(const mrvm_config* pretrain, const mrvm_config* finetune,
                                         const int* train_views, const int* ref_views, size_t n_settings,
                                         const char* const* train_dirs, size_t n_train, const char* const* eval_dirs,
                                         size_t n_eval, const char* out_dir, int threads, char** csv);

#ifdef __cplusplus
}
#endif

#endif /* MRVM_MRVM_H */
