#ifndef MASKGRAD_H
#define MASKGRAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define MG_TASK_REACH 0

#define MG_TASK_PUSH 1

#define MG_REGIME_ID 0

#define MG_REGIME_OOD 1

#define MG_REGIME_OOD_RELEVANT 2

#define MG_REGIME_OOD_IRRELEVANT 3

#define MG_NORM_SOFTMAX 0

#define MG_NORM_SPARSEMAX 1

/*
 Result code of every fallible call.
 */
typedef enum MgStatus {
  MG_STATUS_OK = 0,
  MG_STATUS_NULL_POINTER = 1,
  MG_STATUS_INVALID_ARGUMENT = 2,
  MG_STATUS_DIMENSION_MISMATCH = 3,
  MG_STATUS_IO = 4,
  MG_STATUS_PARSE = 5,
  MG_STATUS_LAYOUT_MISMATCH = 6,
  MG_STATUS_NON_FINITE = 7,
  MG_STATUS_NO_MASK = 8,
  MG_STATUS_PANIC = 9,
  MG_STATUS_INTERNAL = 10,
} MgStatus;

/*
 A loaded checkpoint (any method, including the expert).
 */
typedef struct MgCheckpoint MgCheckpoint;

/*
 An environment instance holding its current state.
 */
typedef struct MgEnv MgEnv;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the last error message of this thread into `buf` (NUL-terminated,
 truncated to `len`). Returns the full message length in bytes, excluding
 the terminator, or 0 if there is none.

 # Safety
 `buf` must be NULL or valid for `len` bytes.
 */
size_t mg_last_error_message(char *buf, size_t len);

/*
 Library version as a static NUL-terminated string.
 */
const char *mg_version(void);

/*
 Loads a checkpoint JSON file. `path` is UTF-8.

 # Safety
 `path` must be a valid C string; `out` must be valid for one write.
 */
enum MgStatus mg_checkpoint_load(const char *path, struct MgCheckpoint **out);

/*
 A checkpoint acting with the scripted expert of `task`.

 # Safety
 `out` must be valid for one write.
 */
enum MgStatus mg_checkpoint_expert(uint32_t task, struct MgCheckpoint **out);

/*
 # Safety
 `ck` must be NULL or a handle from this library not yet freed.
 */
void mg_checkpoint_free(struct MgCheckpoint *ck);

/*
 State and action dimensions of the checkpoint's environment. Either
 output may be NULL.

 # Safety
 `ck` must be a live handle; outputs NULL or valid for one write.
 */
enum MgStatus mg_checkpoint_dims(const struct MgCheckpoint *ck,
                                 size_t *state_dim,
                                 size_t *action_dim);

/*
 Whether the checkpoint has a mask (TransMASK and plain BC do).

 # Safety
 `ck` must be a live handle; `has_mask` valid for one write.
 */
enum MgStatus mg_checkpoint_has_mask(const struct MgCheckpoint *ck, bool *has_mask);

/*
 Policy action for one state.

 # Safety
 `ck` must be a live handle; buffers valid for their stated lengths.
 */
enum MgStatus mg_checkpoint_act(const struct MgCheckpoint *ck,
                                const double *state,
                                size_t state_len,
                                double *action,
                                size_t action_len);

/*
 The n×n mask in row-major order (`len` = n·n).

 # Safety
 `ck` must be a live handle; `out` valid for `len` doubles.
 */
enum MgStatus mg_checkpoint_mask(const struct MgCheckpoint *ck, double *out, size_t len);

/*
 Max-normalized column relevance (`len` = n).

 # Safety
 `ck` must be a live handle; `out` valid for `len` doubles.
 */
enum MgStatus mg_checkpoint_relevance(const struct MgCheckpoint *ck, double *out, size_t len);

/*
 Success rate over `episodes` rollouts from `regime`, seeded by `seed`.
 Optional outputs may be NULL.

 # Safety
 `ck` must be a live handle; outputs NULL or valid for one write.
 */
enum MgStatus mg_checkpoint_evaluate(const struct MgCheckpoint *ck,
                                     uint32_t regime,
                                     size_t episodes,
                                     uint64_t seed,
                                     double *success_rate,
                                     size_t *successes,
                                     size_t *non_finite);

/*
 A fresh environment with default parameters. Call [`mg_env_reset`]
 before stepping.

 # Safety
 `out` must be valid for one write.
 */
enum MgStatus mg_env_new(uint32_t task, struct MgEnv **out);

/*
 The environment a checkpoint was trained on.

 # Safety
 `ck` must be a live handle; `out` valid for one write.
 */
enum MgStatus mg_env_from_checkpoint(const struct MgCheckpoint *ck, struct MgEnv **out);

/*
 # Safety
 `env` must be NULL or a handle from this library not yet freed.
 */
void mg_env_free(struct MgEnv *env);

/*
 # Safety
 `env` must be a live handle; outputs NULL or valid for one write.
 */
enum MgStatus mg_env_dims(const struct MgEnv *env, size_t *state_dim, size_t *action_dim);

/*
 Samples a start state from `regime` with `seed` and writes it to `state`.
 The same seed gives the same start as the Rust evaluator.

 # Safety
 `env` must be a live handle; `state` valid for `state_len` doubles.
 */
enum MgStatus mg_env_reset(struct MgEnv *env,
                           uint32_t regime,
                           uint64_t seed,
                           double *state,
                           size_t state_len);

/*
 Applies `action` to the current state, writes the next state and
 whether it meets the success condition.

 # Safety
 `env` must be a live handle; buffers valid for their stated lengths;
 `success` NULL or valid for one write.
 */
enum MgStatus mg_env_step(struct MgEnv *env,
                          const double *action,
                          size_t action_len,
                          double *state,
                          size_t state_len,
                          bool *success);

/*
 Scripted expert action for `state` (not necessarily the current one).

 # Safety
 `env` must be a live handle; buffers valid for their stated lengths.
 */
enum MgStatus mg_env_expert_action(const struct MgEnv *env,
                                   const double *state,
                                   size_t state_len,
                                   double *action,
                                   size_t action_len);

/*
 Projects `input` onto the probability simplex with softmax or sparsemax.
 `input` and `output` may alias.

 # Safety
 Both buffers must be valid for `len` doubles.
 */
enum MgStatus mg_normalize(uint32_t norm, const double *input, double *output, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MASKGRAD_H */
