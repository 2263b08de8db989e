/* Copyright 2026 The BiMamba Authors. Apache 2.0 License.
 *
 * C interface to the bimamba library. All handles are opaque; every call
 * that can fail returns a bm_status, and bm_last_error() returns the message
 * of the most recent failure on the calling thread.
 *
 * Strings returned through char** are owned by the caller and released with
 * bm_string_free.
 */

#ifndef BIMAMBA_C_H_
#define BIMAMBA_C_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BM_API __declspec(dllexport)
#else
#define BM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bm_status {
  BM_OK = 0,
  BM_ERR_INVALID_ARGUMENT = 1, /* null pointer, bad rank, undersized buffer */
  BM_ERR_DIMENSION = 2,
  BM_ERR_DOMAIN = 3,
  BM_ERR_CONFIG = 4,
  BM_ERR_STRUCTURAL = 5,
  BM_ERR_EVALUATION = 6,
  BM_ERR_IO = 7,
  BM_ERR_INTERNAL = 8
} bm_status;

typedef struct bm_tensor bm_tensor;
typedef struct bm_model bm_model;

BM_API const char* bm_version(void);
BM_API const char* bm_status_name(bm_status status);
/* Empty string when the last call on this thread succeeded. */
BM_API const char* bm_last_error(void);
BM_API void bm_string_free(char* s);

/* ---- tensors: row-major doubles ---- */

/* data may be NULL for a zero tensor. */
BM_API bm_status bm_tensor_create(const size_t* shape, size_t rank, const double* data, bm_tensor** out);
BM_API void bm_tensor_free(bm_tensor* t);
BM_API bm_status bm_tensor_rank(const bm_tensor* t, size_t* rank);
/* Writes min(rank, capacity) extents; fails if capacity < rank. */
BM_API bm_status bm_tensor_shape(const bm_tensor* t, size_t* shape, size_t capacity);
BM_API bm_status bm_tensor_size(const bm_tensor* t, size_t* size);
BM_API bm_status bm_tensor_copy_data(const bm_tensor* t, double* out, size_t capacity);

/* ---- models ---- */

/* spec_json: a model config document (schema_version plus block, mamba,
 * depth, d_in, d_out, pool_mean). Weights are initialized from seed. */
BM_API bm_status bm_model_create(const char* spec_json, uint64_t seed, bm_model** out);
BM_API bm_status bm_model_load(const char* dir, bm_model** out);
BM_API bm_status bm_model_save(const bm_model* m, const char* dir);
BM_API void bm_model_free(bm_model* m);
BM_API bm_status bm_model_param_count(const bm_model* m, size_t* count);
/* Ledger count from the closed-form formulas, without building weights. */
BM_API bm_status bm_model_ledger_count(const char* spec_json, size_t* count);
/* x: [B, L, d_in] (or [B, L, D] when d_in is 0). */
BM_API bm_status bm_model_forward(const bm_model* m, const bm_tensor* x, bm_tensor** out);

/* ---- commands ---- */

/* Runs one of: gradcheck, equiv, bench, boundary, denoise, paramcount,
 * export-grid. config_json may be NULL for defaults (paramcount requires
 * one). When out_dir is not NULL, report.json, timings.json and command
 * artifacts are written there. report_json receives the deterministic
 * report, timings_json (optional) the wall-clock data, passed is 1 when
 * every check held. A failed check is not an error status. */
BM_API bm_status bm_run_command(const char* command, const char* config_json, uint64_t seed, const char* out_dir,
                                char** report_json, char** timings_json, int* passed);

#ifdef __cplusplus
}
#endif

#endif /* BIMAMBA_C_H_ */
