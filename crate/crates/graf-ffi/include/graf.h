/* C interface to the graf waveform-design library. */

#pragma once

/* Generated with cbindgen:0.26.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible API call.
typedef enum GrafStatus {
  GrafStatus_Ok = 0,
  GrafStatus_NullPointer = 1,
  GrafStatus_InvalidArgument = 2,
  GrafStatus_NumericalError = 3,
  GrafStatus_IoError = 4,
  GrafStatus_InternalPanic = 5,
} GrafStatus;

// Opaque ambiguity-surface handle.
typedef struct GrafSurface GrafSurface;

// Opaque waveform handle.
typedef struct GrafWaveform GrafWaveform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent error on this thread. The pointer
// stays valid until the next failing call on the same thread.
const char *graf_last_error_message(void);

// Create a waveform from parallel re/im arrays of length `n`.
//
// # Safety
// `re` and `im` must point to `n` readable doubles; `out` must be a valid
// write target. The handle must be released with [`graf_waveform_free`].
enum GrafStatus graf_waveform_new(const double *re,
                                  const double *im,
                                  uintptr_t n,
                                  struct GrafWaveform **out);

// Create a unit-modulus waveform `e^(j*theta)` from `n` phases.
//
// # Safety
// `theta` must point to `n` readable doubles; `out` must be writable.
enum GrafStatus graf_waveform_from_phases(const double *theta,
                                          uintptr_t n,
                                          struct GrafWaveform **out);

// Deterministic random-phase waveform for a seed (the initialization the
// optimizers use).
//
// # Safety
// `out` must be writable.
enum GrafStatus graf_waveform_random(uintptr_t n, uint64_t seed, struct GrafWaveform **out);

// Length of a waveform handle; 0 for a null handle.
//
// # Safety
// `w` must be null or a live waveform handle.
uintptr_t graf_waveform_len(const struct GrafWaveform *w);

// Copy the waveform samples into caller-provided re/im buffers of length
// [`graf_waveform_len`].
//
// # Safety
// `re` and `im` must point to at least `len` writable doubles.
enum GrafStatus graf_waveform_samples(const struct GrafWaveform *w, double *re, double *im);

// # Safety
// `w` must come from a `graf_waveform_*` constructor and not be freed twice.
void graf_waveform_free(struct GrafWaveform *w);

// Compute the ambiguity surface of a waveform.
//
// # Safety
// `w` must be a live waveform handle; `out` must be writable. The result
// must be released with [`graf_surface_free`].
enum GrafStatus graf_ambiguity(const struct GrafWaveform *w,
                               bool shifted,
                               bool normalize,
                               struct GrafSurface **out);

// Side length of a surface handle; 0 for a null handle.
//
// # Safety
// `s` must be null or a live surface handle.
uintptr_t graf_surface_n(const struct GrafSurface *s);

// Copy the n x n surface, row-major (delay down rows, Doppler across
// columns), into `data`.
//
// # Safety
// `data` must point to at least `n*n` writable doubles.
enum GrafStatus graf_surface_data(const struct GrafSurface *s, double *data);

// # Safety
// `s` must come from [`graf_ambiguity`] and not be freed twice.
void graf_surface_free(struct GrafSurface *s);

// Peak sidelobe level (linear power ratio) outside the `(2*g_k+1) x
// (2*g_m+1)` mainlobe box.
//
// # Safety
// `s` must be a live surface handle; `out` must be writable.
enum GrafStatus graf_psl(const struct GrafSurface *s, uintptr_t g_k, uintptr_t g_m, double *out);

// Integrated sidelobe level over the same region convention as
// [`graf_psl`].
//
// # Safety
// `s` must be a live surface handle; `out` must be writable.
enum GrafStatus graf_isl(const struct GrafSurface *s, uintptr_t g_k, uintptr_t g_m, double *out);

// Population variance of the normalized power spectrum.
//
// # Safety
// `w` must be a live waveform handle; `out` must be writable.
enum GrafStatus graf_spectral_variance(const struct GrafWaveform *w, double *out);

// Evaluate `PSL + lambda * SpectralVariance * alpha` of `e^(j*theta)` and
// its gradient with respect to the phases: the differentiable entry point
// for embedding the pipeline in other frameworks.
//
// # Safety
// `theta` must point to `n` readable doubles; `loss_out` to one writable
// double; `grad_out` to `n` writable doubles.
enum GrafStatus graf_experiment_loss_grad(const double *theta,
                                          uintptr_t n,
                                          double lambda,
                                          double alpha,
                                          uintptr_t g_k,
                                          uintptr_t g_m,
                                          double *loss_out,
                                          double *grad_out);

// Run the full Adam optimization of the experiment loss from the seeded
// random initialization and return the final waveform handle plus its
// metrics (any metric out-pointer may be null to skip that value).
//
// # Safety
// `wave_out` must be writable; metric pointers must be writable when
// non-null.
enum GrafStatus graf_optimize_experiment(uintptr_t n,
                                         double lambda,
                                         double alpha,
                                         uint64_t seed,
                                         uintptr_t iterations,
                                         double learning_rate,
                                         struct GrafWaveform **wave_out,
                                         double *loss_out,
                                         double *psl_db_out,
                                         double *spectral_variance_out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus
