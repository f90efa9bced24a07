/* C interface to the riac action-recognition library. */

#ifndef RIAC_H
#define RIAC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function. Non-zero means
 * failure; `riac_last_error_message` describes the most recent one on the
 * calling thread.
 */
typedef enum RiacStatus {
  RIAC_OK = 0,
  /**
   * A bad argument: null pointer, wrong size, invalid hyperparameter.
   */
  RIAC_INVALID_ARGUMENT = 2,
  /**
   * A file exists but its contents are malformed.
   */
  RIAC_PARSE_ERROR = 3,
  /**
   * The underlying read or write failed.
   */
  RIAC_IO_ERROR = 4,
  /**
   * A numeric self-check failed.
   */
  RIAC_VERIFICATION_ERROR = 5,
  /**
   * An unexpected internal failure (including a caught panic).
   */
  RIAC_INTERNAL_ERROR = 1,
} RiacStatus;

/**
 * Opaque handle to one part-branch model.
 */
typedef struct RiacModel RiacModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The most recent error message on this thread, as a NUL-terminated
 * string. The pointer stays valid until the next failing call on the same
 * thread. Never null; empty before the first failure.
 */
const char *riac_last_error_message(void);

/**
 * Creates a freshly initialized model and stores the handle in `out`.
 * Pass 224/64/128 for the reference architecture. The handle must be
 * released with `riac_model_free`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum RiacStatus riac_model_new(uintptr_t image_size,
                               uintptr_t branch_channels,
                               uintptr_t hidden,
                               uintptr_t n_classes,
                               uint64_t seed,
                               struct RiacModel **out);

/**
 * Creates a model with the given architecture and loads its weights from
 * a checkpoint written by `riac_model_save` (or the `riac train` CLI).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer to
 * writable storage for one handle.
 */
enum RiacStatus riac_model_load(const char *path,
                                uintptr_t image_size,
                                uintptr_t branch_channels,
                                uintptr_t hidden,
                                uintptr_t n_classes,
                                struct RiacModel **out);

/**
 * Writes the model's weights and batch-norm running statistics to `path`.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum RiacStatus riac_model_save(const struct RiacModel *model, const char *path);

/**
 * Releases a handle. Passing null is a no-op.
 *
 * # Safety
 * `model` must have come from this library and not been freed already.
 */
void riac_model_free(struct RiacModel *model);

/**
 * The model's expected square input edge in pixels, or 0 for null.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
uintptr_t riac_model_image_size(const struct RiacModel *model);

/**
 * The model's class count, or 0 for null.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
uintptr_t riac_model_num_classes(const struct RiacModel *model);

/**
 * Runs eval-mode inference on one RGB image and writes a probability per
 * class. `image` is row-major height x width x 3 with values in [0, 1]
 * and must hold `image_size * image_size * 3` doubles; `probs` must hold
 * `n_classes` doubles. The output sums to 1.
 *
 * # Safety
 * `model` must be a live handle; `image` and `probs` must point to
 * buffers of at least `image_len` and `probs_len` doubles.
 */
enum RiacStatus riac_model_predict(const struct RiacModel *model,
                                   const double *image,
                                   uintptr_t image_len,
                                   double *probs,
                                   uintptr_t probs_len);

/**
 * Runs the full gradient-check suite (every primitive and the composed
 * blocks) and returns `RiacOk` when every check passes.
 */
enum RiacStatus riac_gradcheck(uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RIAC_H */
