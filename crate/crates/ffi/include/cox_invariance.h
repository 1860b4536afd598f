#ifndef COX_INVARIANCE_H
#define COX_INVARIANCE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum CoxStatus {
  COX_STATUS_OK = 0,
  COX_STATUS_NULL_POINTER = 1,
  COX_STATUS_INVALID_PARAMETER = 2,
  COX_STATUS_PADDING = 3,
  COX_STATUS_NUMERICAL = 4,
  COX_STATUS_BUFFER_TOO_SMALL = 5,
  COX_STATUS_PANIC = 6,
} CoxStatus;

// Sorted atoms on a window.
typedef struct CoxConfiguration CoxConfiguration;

// Intensity `(Z e^{-2 lambda x} + Y) dx`.
typedef struct CoxModel CoxModel;

// Observation window, time, drift and certified padding.
typedef struct CoxPlan CoxPlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread, NUL-terminated, into `buf`.
// Returns the buffer size needed (including the NUL); 0 if there is none.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
uintptr_t cox_last_error_message(char *buf, uintptr_t len);

// Library version as a static NUL-terminated string.
const char *cox_version(void);

// `P(G > z)` for a standard normal `G`.
double cox_gaussian_tail(double z);

// # Safety
// `out` must be a valid pointer; on success it receives a handle owned by
// the caller.
enum CoxStatus cox_model_new(double z, double y, double lambda, struct CoxModel **out);

// # Safety
// `model` must be null or a handle from [`cox_model_new`] not yet freed.
void cox_model_free(struct CoxModel *model);

// Expected number of atoms of `model` in `[lo, hi]`.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum CoxStatus cox_intensity_mass(const struct CoxModel *model, double lo, double hi, double *out);

// `E exp(-<f, theta>)` for `f = height * 1_[lo, hi]` and
// `theta ~ PPP((z e^{-2 lambda x} + y) dx)`.
//
// # Safety
// `out` must be a valid pointer.
enum CoxStatus cox_laplace_step(double lo,
                                double hi,
                                double height,
                                double z,
                                double y,
                                double lambda,
                                double *out);

// Plans an evolution on `[lo, hi]` to time `t` under drift `-lambda`, with
// padding certified for `model` at leak `epsilon`.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum CoxStatus cox_plan_new(const struct CoxModel *model,
                            double lo,
                            double hi,
                            double t,
                            double lambda,
                            double epsilon,
                            uint64_t seed,
                            struct CoxPlan **out);

// # Safety
// `plan` must be a live handle; `lo` and `hi` valid pointers.
enum CoxStatus cox_plan_padded_window(const struct CoxPlan *plan, double *lo, double *hi);

// # Safety
// `plan` must be null or a handle from [`cox_plan_new`] not yet freed.
void cox_plan_free(struct CoxPlan *plan);

// Samples replicate `stream_id` of the plan: the initial and evolved
// configurations on the observation window.
//
// # Safety
// `model` and `plan` must be live handles; `initial` and `evolved` valid
// pointers. Both returned handles are owned by the caller.
enum CoxStatus cox_observe(const struct CoxModel *model,
                           const struct CoxPlan *plan,
                           uint64_t stream_id,
                           struct CoxConfiguration **initial,
                           struct CoxConfiguration **evolved);

// Number of atoms.
//
// # Safety
// `config` must be a live handle and `out` a valid pointer.
enum CoxStatus cox_configuration_len(const struct CoxConfiguration *config, uintptr_t *out);

// Copies the sorted atoms into `buf`, which must hold at least
// `cox_configuration_len` values.
//
// # Safety
// `config` must be a live handle and `buf` point to `cap` writable doubles.
enum CoxStatus cox_configuration_atoms(const struct CoxConfiguration *config,
                                       double *buf,
                                       uintptr_t cap);

// # Safety
// `config` must be null or a handle from [`cox_observe`] not yet freed.
void cox_configuration_free(struct CoxConfiguration *config);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COX_INVARIANCE_H */
