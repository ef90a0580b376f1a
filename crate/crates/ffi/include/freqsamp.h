#ifndef FREQSAMP_H
#define FREQSAMP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FsqStatus {
  FSQ_OK = 0,
  FSQ_NULL_POINTER = 1,
  FSQ_INVALID_ARGUMENT = 2,
  FSQ_CONFIG = 3,
  FSQ_NUMERICAL = 4,
  FSQ_SHAPE = 5,
  FSQ_IO = 6,
  FSQ_PANIC = 7,
} FsqStatus;

/**
 * Opaque system handle.
 */
typedef struct FsqSystem FsqSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *fsq_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fsq_version(void);

/**
 * Builds a system from a JSON snapshot on a grid of `num_bins` points at
 * `sample_rate`, enveloped for `antialias_db` (0 disables).
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FsqStatus fsq_system_from_json(const char *json,
                                    size_t num_bins,
                                    double sample_rate,
                                    double antialias_db,
                                    struct FsqSystem **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `sys` must come from `fsq_system_from_json` and not be used afterwards.
 */
void fsq_system_free(struct FsqSystem *sys);

/**
 * Input count, output count and grid size of a system.
 *
 * # Safety
 * `sys` must be a live handle; output pointers may be null to skip them.
 */
enum FsqStatus fsq_system_info(const struct FsqSystem *sys,
                               size_t *num_inputs,
                               size_t *num_outputs,
                               size_t *num_bins);

/**
 * Impulse response of `output_channel` for an impulse on `input_channel`
 * (negative: all inputs at once). Writes `2(num_bins − 1)` samples.
 *
 * # Safety
 * `sys` must be a live handle and `out` hold `capacity` doubles.
 */
enum FsqStatus fsq_system_impulse_response(const struct FsqSystem *sys,
                                           int64_t input_channel,
                                           size_t output_channel,
                                           double *out,
                                           size_t capacity);

/**
 * Magnitude response over the `num_bins` grid points.
 *
 * # Safety
 * `sys` must be a live handle and `out` hold `capacity` doubles.
 */
enum FsqStatus fsq_system_magnitude_response(const struct FsqSystem *sys,
                                             int64_t input_channel,
                                             size_t output_channel,
                                             double *out,
                                             size_t capacity);

/**
 * Envelope factor γ that suppresses aliasing by `target_db` at the wrap
 * point of an `num_bins`-point grid.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FsqStatus fsq_choose_gamma(size_t num_bins, double target_db, double *out);

/**
 * Echo density profile of `len` samples. Writes one value per hop of
 * `window / 2` samples and stores the count in `count`.
 *
 * # Safety
 * `ir` must hold `len` doubles, `eta` hold `capacity` doubles and `count`
 * be a valid pointer.
 */
enum FsqStatus fsq_echo_density(const double *ir,
                                size_t len,
                                double sample_rate,
                                size_t window,
                                double *eta,
                                size_t capacity,
                                size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FREQSAMP_H */
