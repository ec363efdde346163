#ifndef SIGLAB_H
#define SIGLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of values written by `siglab_trainer_evaluate`.
 */
#define SIGLAB_METRIC_COUNT 10

/**
 * Result code of every fallible call.
 */
typedef enum SiglabStatus {
  SIGLAB_STATUS_OK = 0,
  SIGLAB_STATUS_NULL_POINTER = 1,
  SIGLAB_STATUS_INVALID_UTF8 = 2,
  SIGLAB_STATUS_CONFIG = 3,
  SIGLAB_STATUS_PARSE = 4,
  SIGLAB_STATUS_IO = 5,
  SIGLAB_STATUS_CHECKPOINT = 6,
  SIGLAB_STATUS_DIMENSION = 7,
  SIGLAB_STATUS_LOGIC = 8,
  SIGLAB_STATUS_RENDER = 9,
  SIGLAB_STATUS_BUFFER_TOO_SMALL = 10,
  SIGLAB_STATUS_PANIC = 11,
} SiglabStatus;

/**
 * Parsed experiment configuration.
 */
typedef struct SiglabConfig SiglabConfig;

/**
 * One training run together with the configuration it was built from.
 */
typedef struct SiglabTrainer SiglabTrainer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call into this library.
 */
const char *siglab_last_error(void);

/**
 * Parses a `key = value` configuration text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a writable pointer.
 */
enum SiglabStatus siglab_config_parse(const char *text, struct SiglabConfig **out);

/**
 * Reads and parses a configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum SiglabStatus siglab_config_from_file(const char *path, struct SiglabConfig **out);

/**
 * Total parameter count of the configured sender and receiver.
 *
 * # Safety
 * `config` must be null or a live handle.
 */
size_t siglab_config_param_count(const struct SiglabConfig *config);

/**
 * # Safety
 * `config` must be null or a handle not freed before.
 */
void siglab_config_free(struct SiglabConfig *config);

/**
 * Fresh run with parameters initialized from `seed`. `threads` caps
 * evaluation parallelism; 0 uses the global pool.
 *
 * # Safety
 * `config` must be a live handle and `out` a writable pointer.
 */
enum SiglabStatus siglab_trainer_new(const struct SiglabConfig *config,
                                     uint64_t seed,
                                     size_t threads,
                                     struct SiglabTrainer **out);

/**
 * Resumes a run from a checkpoint and its sidecar file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum SiglabStatus siglab_trainer_load(const char *path, struct SiglabTrainer **out);

/**
 * # Safety
 * `trainer` must be null or a handle not freed before.
 */
void siglab_trainer_free(struct SiglabTrainer *trainer);

/**
 * Runs `iterations` optimizer steps.
 *
 * # Safety
 * `trainer` must be a live handle.
 */
enum SiglabStatus siglab_trainer_step(struct SiglabTrainer *trainer, uint64_t iterations);

/**
 * Completed optimizer steps, or 0 for a null handle.
 *
 * # Safety
 * `trainer` must be null or a live handle.
 */
uint64_t siglab_trainer_iteration(const struct SiglabTrainer *trainer);

/**
 * Plays the metrics batch at the current parameters and writes the
 * `SIGLAB_METRIC_COUNT` values in the order of `siglab_metric_name`.
 *
 * # Safety
 * `trainer` must be a live handle and `out` must point to `len` doubles.
 */
enum SiglabStatus siglab_trainer_evaluate(const struct SiglabTrainer *trainer,
                                          double *out,
                                          size_t len);

/**
 * Copies the current parameters into `out`, which must hold
 * `siglab_config_param_count` doubles.
 *
 * # Safety
 * `trainer` must be a live handle and `out` must point to `len` doubles.
 */
enum SiglabStatus siglab_trainer_params(const struct SiglabTrainer *trainer,
                                        double *out,
                                        size_t len);

/**
 * Writes a checkpoint and its sidecar to `path`.
 *
 * # Safety
 * `trainer` must be a live handle and `path` a NUL-terminated string.
 */
enum SiglabStatus siglab_trainer_save(const struct SiglabTrainer *trainer, const char *path);

/**
 * Name of metric `index` (0-based, below `SIGLAB_METRIC_COUNT`), or null.
 * The string is static.
 */
const char *siglab_metric_name(size_t index);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIGLAB_H */
