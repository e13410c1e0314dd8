/* Generated by cbindgen from crates/ffi; do not edit. */

#ifndef DISCFDR_H
#define DISCFDR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code returned by every fallible function.
 */
typedef enum DfStatus {
  DF_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DF_STATUS_NULL_POINTER = 1,
  /**
   * Malformed data: counts, p-values or lengths.
   */
  DF_STATUS_INVALID_INPUT = 2,
  /**
   * Parameters inconsistent with the data or with each other.
   */
  DF_STATUS_INVALID_CONFIG = 3,
  /**
   * A tuning parameter lies outside `[nu, 1)`.
   */
  DF_STATUS_TAU_OUT_OF_RANGE = 4,
  DF_STATUS_DEGENERATE = 5,
  /**
   * An output buffer is too small; the required length was written.
   */
  DF_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  DF_STATUS_PANIC = 7,
} DfStatus;

/**
 * Attainable p-values of one exact test and their null law.
 */
typedef struct DfSupport DfSupport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * NUL-terminated library version.
 */
const char *df_version(void);

/**
 * Creates the support of the two-sided Fisher exact test for group sizes
 * `n1`, `n2` and total count `c`.
 */
enum DfStatus df_fet_support_new(uint64_t n1,
                                 uint64_t n2,
                                 uint64_t c,
                                 struct DfSupport **out_support);

/**
 * Creates the support of the conditional binomial (sign) test with `c`
 * total events.
 */
enum DfStatus df_bt_support_new(uint64_t c, struct DfSupport **out_support);

/**
 * Releases a support. Null is ignored.
 */
void df_support_free(struct DfSupport *support);

/**
 * Number of attainable p-values; 0 for a null handle.
 */
size_t df_support_len(const struct DfSupport *support);

/**
 * Copies the sorted support values into `buffer`. `out_len` receives the
 * number of values, also when the buffer is too small.
 */
enum DfStatus df_support_values(const struct DfSupport *support,
                                double *buffer,
                                size_t capacity,
                                size_t *out_len);

/**
 * Copies the null probability of each support value into `buffer`.
 */
enum DfStatus df_support_masses(const struct DfSupport *support,
                                double *buffer,
                                size_t capacity,
                                size_t *out_len);

/**
 * Null CDF `P(p <= t)`.
 */
enum DfStatus df_support_null_cdf(const struct DfSupport *support, double t, double *out_value);

/**
 * `P(p <= t)` under the noncentral law with odds ratio `psi`.
 */
enum DfStatus df_support_alt_cdf(const struct DfSupport *support,
                                 double psi,
                                 double t,
                                 double *out_value);

/**
 * P-value attached to outcome `y` (the group-1 count).
 */
enum DfStatus df_support_pvalue_of_outcome(const struct DfSupport *support,
                                           uint64_t y,
                                           double *out_value);

/**
 * Two-sided Fisher exact p-value for `x1` of `n1` against `x2` of `n2`.
 */
enum DfStatus df_fet_pvalue(uint64_t x1, uint64_t x2, uint64_t n1, uint64_t n2, double *out_value);

/**
 * Two-sided sign-test p-value for `x` of `c` events.
 */
enum DfStatus df_bt_pvalue(uint64_t x, uint64_t c, double *out_value);

/**
 * Proportion-of-nulls estimate from `m` p-values and their supports.
 * `n_taus = 0` selects the default grid `max(nu, j / 20)`.
 */
enum DfStatus df_pi0_hat_h(const struct DfSupport *const *supports,
                           const double *pvalues,
                           size_t m,
                           const double *taus,
                           size_t n_taus,
                           double *out_pi0);

/**
 * The comparator of [`df_pi0_hat_h`] with each `eta_j` replaced by `tau_j`.
 */
enum DfStatus df_pi0_hat_substituted(const struct DfSupport *const *supports,
                                     const double *pvalues,
                                     size_t m,
                                     const double *taus,
                                     size_t n_taus,
                                     double *out_pi0);

/**
 * Storey's estimator at `tau`, capped at 1. With `plus_one` nonzero the
 * numerator gains 1.
 */
enum DfStatus df_storey_pi0(const double *pvalues,
                            size_t m,
                            double tau,
                            bool plus_one,
                            double *out_pi0);

/**
 * Benjamini-Hochberg step-up at level `alpha` with plug-in `pi0` in
 * `(0, 1]`; 1 gives the plain procedure.
 */
enum DfStatus df_bh(const double *pvalues,
                    size_t m,
                    double pi0,
                    double alpha,
                    double *out_adjusted,
                    uint8_t *out_rejected,
                    size_t *out_k);

/**
 * Discrete step-up procedure using each test's null CDF, with plug-in
 * `pi0` in `(0, 1]`; 1 gives the plain procedure.
 */
enum DfStatus df_bhh(const struct DfSupport *const *supports,
                     const double *pvalues,
                     size_t m,
                     double pi0,
                     double alpha,
                     double *out_adjusted,
                     uint8_t *out_rejected,
                     size_t *out_k);

/**
 * Closed form and direct sum of `E[1 / (1 + B)]`, `B ~ Binomial(m0 - 1,
 * 1 - eta)`, with the bound `1 / (m0 (1 - eta))`.
 */
enum DfStatus df_inverse_binomial_check(uint64_t m0,
                                        double eta,
                                        double *out_closed_form,
                                        double *out_summed,
                                        double *out_bound);

/**
 * Message describing the last failure on this thread, or null if the most
 * recent call succeeded. The pointer stays valid until the next call into
 * this library on the same thread.
 */
const char *df_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISCFDR_H */
