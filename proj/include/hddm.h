/* Copyright (C) 2026 The HDDM Authors
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef HDDM_H_
#define HDDM_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(HDDM_BUILDING_LIBRARY)
#    define HDDM_API __declspec(dllexport)
#  else
#    define HDDM_API __declspec(dllimport)
#  endif
#else
#  define HDDM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hddm_status {
    HDDM_OK = 0,
    HDDM_ERR_DOMAIN = 1,
    HDDM_ERR_SHAPE = 2,
    HDDM_ERR_NUMERIC = 3,
    HDDM_ERR_SPEC = 4,
    HDDM_ERR_CONFIG = 5,
    HDDM_ERR_USAGE = 6,
    HDDM_ERR_SELECTION = 7,
    HDDM_ERR_CONVERSION = 8,
    HDDM_ERR_IO = 9,
    HDDM_ERR_CHECKSUM = 10,
    HDDM_ERR_VERSION = 11,
    HDDM_ERR_FORMAT = 12,
    HDDM_ERR_TYPE = 13,
    HDDM_ERR_INTERNAL = 99
} hddm_status;

typedef enum hddm_objective { HDDM_EPSILON = 0, HDDM_VELOCITY = 1, HDDM_CLASSIFIER = 2 } hddm_objective;
typedef enum hddm_schedule { HDDM_LINEAR = 0, HDDM_COSINE = 1 } hddm_schedule;

/* Message of the last failure on the calling thread ("" after success). */
HDDM_API const char* hddm_last_error(void);
/* Report text of the last successful command on the calling thread. */
HDDM_API const char* hddm_last_output(void);
HDDM_API const char* hddm_status_name(hddm_status status);
HDDM_API const char* hddm_version(void);

HDDM_API hddm_status hddm_schedule_eval(hddm_schedule schedule, double t, double* alpha, double* sigma);
HDDM_API hddm_status hddm_schedule_derivatives(hddm_schedule schedule, double t, double* dalpha, double* dsigma);
HDDM_API hddm_status hddm_time_index(double t, int* index);

/* Converts an epsilon prediction to a velocity with the default safeguards
 * (exact != 0 disables them). */
HDDM_API hddm_status hddm_eps_to_velocity(hddm_schedule schedule, double t, const double* x_t, const double* eps,
                                          size_t dim, int exact, double* velocity);

typedef struct hddm_model hddm_model;

typedef struct hddm_model_info {
    int objective;
    int schedule;
    int layers;
    int width;
    int data_dim;
    int cond_count;
    int out_dim;
    uint64_t step_count;
    uint64_t parameter_count;
} hddm_model_info;

HDDM_API hddm_status hddm_model_create(int layers, int width, int data_dim, int cond_count, hddm_objective objective,
                                       hddm_schedule schedule, uint64_t seed, hddm_model** out);
HDDM_API hddm_status hddm_model_load(const char* path, hddm_model** out);
HDDM_API hddm_status hddm_model_save(const hddm_model* model, const char* path);
HDDM_API void hddm_model_free(hddm_model* model);
HDDM_API hddm_status hddm_model_info_get(const hddm_model* model, hddm_model_info* info);
/* cond < 0 selects the null condition. Writes out_dim values. */
HDDM_API hddm_status hddm_model_forward(const hddm_model* model, const double* x_t, size_t dim, double t, int cond,
                                        int use_ema, double* out, size_t out_len);

/* Pipeline commands. config_path may be NULL for built-in defaults; out_dir
 * NULL keeps the config value; seed is applied when has_seed != 0. */
typedef struct hddm_run_options {
    const char* config_path;
    const char* out_dir;
    int has_seed;
    uint64_t seed;
} hddm_run_options;

HDDM_API hddm_status hddm_cmd_cluster(const hddm_run_options* options);
HDDM_API hddm_status hddm_cmd_train_expert(const hddm_run_options* options, int k);
HDDM_API hddm_status hddm_cmd_train_router(const hddm_run_options* options);
HDDM_API hddm_status hddm_cmd_sample(const hddm_run_options* options);
HDDM_API hddm_status hddm_cmd_evaluate(const hddm_run_options* options, const char* study);
HDDM_API hddm_status hddm_cmd_convert_checkpoint(const char* src, const char* dst, const char* objective,
                                                 const char* schedule, uint64_t seed);
/* Sets *trunk_identical and leaves a report in hddm_last_output(). */
HDDM_API hddm_status hddm_cmd_diff_checkpoint(const char* a, const char* b, int* trunk_identical);

#ifdef __cplusplus
}
#endif

#endif /* HDDM_H_ */
