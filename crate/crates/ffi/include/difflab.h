#ifndef DIFFLAB_H
#define DIFFLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success; the others mirror the core error kinds.
typedef enum DlStatus {
  DL_OK = 0,
  DL_NULL_POINTER = 1,
  DL_INVALID_STRING = 2,
  DL_DOMAIN = 3,
  DL_NUMERIC = 4,
  DL_ADMISSIBILITY = 5,
  DL_DIVERGENCE = 6,
  DL_BUDGET = 7,
  DL_UNSUPPORTED = 8,
  DL_SCHEMA = 9,
  DL_IO = 10,
  DL_PANIC = 11,
} DlStatus;

// Terminal moments of a sampler run.
typedef struct DlRun DlRun;

// A forward-noise schedule on `[0, horizon]`.
typedef struct DlSchedule DlSchedule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *dl_version(void);

// Message for the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call into this library on the same thread.
const char *dl_last_error_message(void);

// Create a built-in schedule. `params` lists the family parameters in declaration
// order, e.g. `{a, b}` for `ve_exp` or `{beta_min, beta_max, rho}` for `vp_poly`.
//
// # Safety
// `family` must be a NUL-terminated string, `params` must point to `n_params`
// doubles (or be null when `n_params` is 0), and `out_schedule` must be writable.
enum DlStatus dl_schedule_new(const char *family,
                              const double *params,
                              uintptr_t n_params,
                              double horizon,
                              struct DlSchedule **out_schedule);

// Release a schedule. Null is ignored.
//
// # Safety
// `schedule` must come from `dl_schedule_new` and not be used afterwards.
void dl_schedule_free(struct DlSchedule *schedule);

// Transition-kernel coefficients: `x_t | x_0 ~ N(a1 x_0, a2 I)`.
//
// # Safety
// Pointers must be valid; `schedule` must be live.
enum DlStatus dl_schedule_kernel(const struct DlSchedule *schedule,
                                 double t,
                                 double *a1,
                                 double *a2);

// Terminal per-coordinate variance of the discrete reverse chain for
// `N(0, sigma0_sq I_d)` data with the exact score, using `steps` equal steps.
//
// # Safety
// Pointers must be valid; `schedule` must be live.
enum DlStatus dl_gaussian_terminal_variance(const struct DlSchedule *schedule,
                                            double sigma0_sq,
                                            uintptr_t d,
                                            uintptr_t steps,
                                            double *out_variance);

// First-order stepsize coefficient of the terminal variance.
//
// # Safety
// Pointers must be valid; `schedule` must be live.
enum DlStatus dl_gaussian_c0(const struct DlSchedule *schedule,
                             double sigma0_sq,
                             uintptr_t d,
                             double *out_c0);

// Stepsize admissibility for Gaussian data. `out_admissible` receives 1 or 0,
// `out_eta_max` the largest admissible stepsize (0 when none is).
//
// # Safety
// Pointers must be valid; `schedule` must be live.
enum DlStatus dl_stepsize_admissible(const struct DlSchedule *schedule,
                                     double sigma0_sq,
                                     uintptr_t d,
                                     uintptr_t steps,
                                     int32_t *out_admissible,
                                     double *out_eta_max);

// Wasserstein upper bound for Gaussian data with score error `score_error`
// and time-Lipschitz constant `score_lipschitz`.
//
// # Safety
// Pointers must be valid; `schedule` must be live.
enum DlStatus dl_theorem_bound(const struct DlSchedule *schedule,
                               double sigma0_sq,
                               uintptr_t d,
                               uintptr_t steps,
                               double score_error,
                               double score_lipschitz,
                               double *out_bound);

// Step-count prescription for the schedule's family at accuracy `eps` in dimension `d`,
// with standard-normal data constants. The schedule's horizon is ignored.
//
// # Safety
// Pointers must be valid; `schedule` must be live.
enum DlStatus dl_prescribe(const struct DlSchedule *schedule,
                           double eps,
                           uintptr_t d,
                           double *out_horizon,
                           double *out_eta_max,
                           double *out_m_max,
                           uint64_t *out_k_min);

// Run the reverse sampler on Gaussian data with the exact score plus
// isotropic noise of L2 magnitude `score_error` (0 for the exact score).
//
// # Safety
// Pointers must be valid; `schedule` must be live.
enum DlStatus dl_sample(const struct DlSchedule *schedule,
                        double sigma0_sq,
                        uintptr_t d,
                        uintptr_t steps,
                        uintptr_t chains,
                        uint64_t seed,
                        double score_error,
                        struct DlRun **out_run);

// Release a run. Null is ignored.
//
// # Safety
// `run` must come from `dl_sample` and not be used afterwards.
void dl_run_free(struct DlRun *run);

// Pooled per-coordinate second moment of the terminal states and its standard error.
//
// # Safety
// Pointers must be valid; `run` must be live.
enum DlStatus dl_run_second_moment(const struct DlRun *run,
                                   double *out_moment,
                                   double *out_std_error);

// W2 between the moment-matched Gaussian of the terminal states and `N(0, sigma0_sq I)`.
//
// # Safety
// Pointers must be valid; `run` must be live.
enum DlStatus dl_run_w2_moment_matched(const struct DlRun *run, double sigma0_sq, double *out_w2);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIFFLAB_H */
