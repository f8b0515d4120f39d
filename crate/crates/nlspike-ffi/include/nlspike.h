/* C ABI for the nlspike integer-only spiking nonlinearity kernels. */

#ifndef NLSPIKE_H
#define NLSPIKE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define NLSPIKE_OK 0

#define NLSPIKE_ERR_NULL_ARGUMENT 1

#define NLSPIKE_ERR_INVALID_CONFIG 2

#define NLSPIKE_ERR_EMPTY_INPUT 3

#define NLSPIKE_ERR_DENOMINATOR_UNDERFLOW 4

#define NLSPIKE_ERR_NON_FINITE_INPUT 5

#define NLSPIKE_ERR_INTERNAL 6

/**
 * Opaque kernel configuration. Create with `nlspike_config_new`, release
 * with `nlspike_config_free`.
 */
typedef struct NlspikeConfig NlspikeConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Build a kernel configuration. `h` is the clipping half-interval, `k` the
 * exponential table segment count (power of two), `t`/`l` the division
 * window and population sizes (powers of two), `n_cordic` the CORDIC
 * iteration count. On success writes the handle to `out` and returns 0.
 */
int nlspike_config_new(double h,
                       uint32_t k,
                       uint32_t t,
                       uint32_t l,
                       uint32_t n_cordic,
                       struct NlspikeConfig **out);

/**
 * Release a configuration handle. Accepts NULL.
 */
void nlspike_config_free(struct NlspikeConfig *cfg);

/**
 * Spiking softmax over `len` logits; writes `len` probabilities to `out`.
 */
int nlspike_softmax(const struct NlspikeConfig *cfg, const double *logits, size_t len, double *out);

/**
 * Spiking SiLU of one scalar; writes the result to `out`.
 */
int nlspike_silu(const struct NlspikeConfig *cfg, double x, double *out);

/**
 * Spiking RMSNorm over `len` activations; writes `len` values to `out`.
 */
int nlspike_rmsnorm(const struct NlspikeConfig *cfg,
                    const double *x,
                    size_t len,
                    double eps,
                    double *out);

/**
 * Spiking LayerNorm (mean subtraction then RMSNorm); writes `len` values.
 */
int nlspike_layernorm(const struct NlspikeConfig *cfg,
                      const double *x,
                      size_t len,
                      double eps,
                      double *out);

/**
 * Per-class relative error bound of the spiking softmax.
 */
double nlspike_bound_softmax(const struct NlspikeConfig *cfg);

/**
 * Absolute error bound of the spiking SiLU at input magnitude `x`.
 */
double nlspike_bound_silu(const struct NlspikeConfig *cfg, double x);

/**
 * Per-coordinate relative error bound of the spiking RMSNorm at dimension `d`.
 */
double nlspike_bound_rmsnorm(const struct NlspikeConfig *cfg, size_t d);

/**
 * Size in bytes of the serialized exponential lookup table.
 */
size_t nlspike_lut_size(const struct NlspikeConfig *cfg);

/**
 * Serialize the exponential lookup table into `buf` (capacity `cap`).
 * Returns 0 and sets `written`; fails with `NLSPIKE_ERR_EMPTY_INPUT` when
 * the buffer is too small.
 */
int nlspike_lut_emit(const struct NlspikeConfig *cfg, uint8_t *buf, size_t cap, size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NLSPIKE_H */
