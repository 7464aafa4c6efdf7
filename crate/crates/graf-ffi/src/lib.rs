//! C ABI for the graf library: opaque handles, integer status codes, and a
//! thread-local last-error message. The header `include/graf.h` is
//! generated by cbindgen at build time.
//!
//! Conventions: every fallible function returns [`GrafStatus`] and writes
//! results through out-pointers; handles are created by `*_new`-style
//! constructors and released by the matching `*_free`. Passing a pointer
//! obtained from anywhere else is undefined behavior. Handles are not
//! thread-safe; share them only with external synchronization.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use graf_core::ambiguity::{ambiguity, AmbiguityOpts, AmbiguitySurface, Waveform};
use graf_core::losses::{
    isl_value, psl_value, signal_nodes, spectral_variance_value, ExclusionRegion, LossKind,
};
use graf_core::optim::{initial_waveform, optimize_gradient, AdamConfig, GradientMode, RunStatus};
use graf_core::tape::Tape;
use graf_core::Error;
use num_complex::Complex64;

/// Status code returned by every fallible API call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GrafStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NumericalError = 3,
    IoError = 4,
    InternalPanic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> GrafStatus {
    match err {
        Error::InvalidArgument(_) | Error::Usage(_) | Error::Parse(_) => {
            GrafStatus::InvalidArgument
        }
        Error::NonFinite { .. } => GrafStatus::NumericalError,
        Error::Io { .. } => GrafStatus::IoError,
    }
}

fn guard(body: impl FnOnce() -> GrafStatus) -> GrafStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            GrafStatus::InternalPanic
        }
    }
}

macro_rules! not_null {
    ($ptr:expr) => {
        if $ptr.is_null() {
            set_error(concat!("null pointer: ", stringify!($ptr)));
            return GrafStatus::NullPointer;
        }
    };
}

fn fail(err: Error) -> GrafStatus {
    set_error(&err.to_string());
    status_of(&err)
}

/// Opaque waveform handle.
pub struct GrafWaveform {
    inner: Waveform,
}

/// Opaque ambiguity-surface handle.
pub struct GrafSurface {
    inner: AmbiguitySurface,
}

/// Message describing the most recent error on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn graf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Create a waveform from parallel re/im arrays of length `n`.
///
/// # Safety
/// `re` and `im` must point to `n` readable doubles; `out` must be a valid
/// write target. The handle must be released with [`graf_waveform_free`].
#[no_mangle]
pub unsafe extern "C" fn graf_waveform_new(
    re: *const f64,
    im: *const f64,
    n: usize,
    out: *mut *mut GrafWaveform,
) -> GrafStatus {
    guard(|| {
        not_null!(re);
        not_null!(im);
        not_null!(out);
        if n == 0 {
            set_error("waveform length must be at least 1");
            return GrafStatus::InvalidArgument;
        }
        let res = std::slice::from_raw_parts(re, n);
        let ims = std::slice::from_raw_parts(im, n);
        let samples: Vec<Complex64> = res
            .iter()
            .zip(ims)
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            set_error("waveform samples must be finite");
            return GrafStatus::InvalidArgument;
        }
        *out = Box::into_raw(Box::new(GrafWaveform {
            inner: Waveform::FreeComplex(samples),
        }));
        GrafStatus::Ok
    })
}

/// Create a unit-modulus waveform `e^(j*theta)` from `n` phases.
///
/// # Safety
/// `theta` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn graf_waveform_from_phases(
    theta: *const f64,
    n: usize,
    out: *mut *mut GrafWaveform,
) -> GrafStatus {
    guard(|| {
        not_null!(theta);
        not_null!(out);
        if n == 0 {
            set_error("waveform length must be at least 1");
            return GrafStatus::InvalidArgument;
        }
        let phases = std::slice::from_raw_parts(theta, n);
        if phases.iter().any(|p| !p.is_finite()) {
            set_error("phases must be finite");
            return GrafStatus::InvalidArgument;
        }
        *out = Box::into_raw(Box::new(GrafWaveform {
            inner: Waveform::PhaseOnly(phases.to_vec()),
        }));
        GrafStatus::Ok
    })
}

/// Deterministic random-phase waveform for a seed (the initialization the
/// optimizers use).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn graf_waveform_random(
    n: usize,
    seed: u64,
    out: *mut *mut GrafWaveform,
) -> GrafStatus {
    guard(|| {
        not_null!(out);
        if n == 0 {
            set_error("waveform length must be at least 1");
            return GrafStatus::InvalidArgument;
        }
        *out = Box::into_raw(Box::new(GrafWaveform {
            inner: initial_waveform(n, seed),
        }));
        GrafStatus::Ok
    })
}

/// Length of a waveform handle; 0 for a null handle.
///
/// # Safety
/// `w` must be null or a live waveform handle.
#[no_mangle]
pub unsafe extern "C" fn graf_waveform_len(w: *const GrafWaveform) -> usize {
    if w.is_null() {
        return 0;
    }
    (*w).inner.len()
}

/// Copy the waveform samples into caller-provided re/im buffers of length
/// [`graf_waveform_len`].
///
/// # Safety
/// `re` and `im` must point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn graf_waveform_samples(
    w: *const GrafWaveform,
    re: *mut f64,
    im: *mut f64,
) -> GrafStatus {
    guard(|| {
        not_null!(w);
        not_null!(re);
        not_null!(im);
        let samples = (*w).inner.samples();
        for (i, z) in samples.iter().enumerate() {
            *re.add(i) = z.re;
            *im.add(i) = z.im;
        }
        GrafStatus::Ok
    })
}

/// # Safety
/// `w` must come from a `graf_waveform_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn graf_waveform_free(w: *mut GrafWaveform) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Compute the ambiguity surface of a waveform.
///
/// # Safety
/// `w` must be a live waveform handle; `out` must be writable. The result
/// must be released with [`graf_surface_free`].
#[no_mangle]
pub unsafe extern "C" fn graf_ambiguity(
    w: *const GrafWaveform,
    shifted: bool,
    normalize: bool,
    out: *mut *mut GrafSurface,
) -> GrafStatus {
    guard(|| {
        not_null!(w);
        not_null!(out);
        match ambiguity(&(*w).inner, AmbiguityOpts { shifted, normalize }) {
            Ok(surface) => {
                *out = Box::into_raw(Box::new(GrafSurface { inner: surface }));
                GrafStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Side length of a surface handle; 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live surface handle.
#[no_mangle]
pub unsafe extern "C" fn graf_surface_n(s: *const GrafSurface) -> usize {
    if s.is_null() {
        return 0;
    }
    (*s).inner.n()
}

/// Copy the n x n surface, row-major (delay down rows, Doppler across
/// columns), into `data`.
///
/// # Safety
/// `data` must point to at least `n*n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn graf_surface_data(s: *const GrafSurface, data: *mut f64) -> GrafStatus {
    guard(|| {
        not_null!(s);
        not_null!(data);
        let chi = (*s).inner.chi.as_slice();
        std::ptr::copy_nonoverlapping(chi.as_ptr(), data, chi.len());
        GrafStatus::Ok
    })
}

/// # Safety
/// `s` must come from [`graf_ambiguity`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn graf_surface_free(s: *mut GrafSurface) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Peak sidelobe level (linear power ratio) outside the `(2*g_k+1) x
/// (2*g_m+1)` mainlobe box.
///
/// # Safety
/// `s` must be a live surface handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn graf_psl(
    s: *const GrafSurface,
    g_k: usize,
    g_m: usize,
    out: *mut f64,
) -> GrafStatus {
    guard(|| {
        not_null!(s);
        not_null!(out);
        match psl_value(&(*s).inner, &ExclusionRegion { g_k, g_m }) {
            Ok(v) => {
                *out = v;
                GrafStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Integrated sidelobe level over the same region convention as
/// [`graf_psl`].
///
/// # Safety
/// `s` must be a live surface handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn graf_isl(
    s: *const GrafSurface,
    g_k: usize,
    g_m: usize,
    out: *mut f64,
) -> GrafStatus {
    guard(|| {
        not_null!(s);
        not_null!(out);
        match isl_value(&(*s).inner, &ExclusionRegion { g_k, g_m }) {
            Ok(v) => {
                *out = v;
                GrafStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Population variance of the normalized power spectrum.
///
/// # Safety
/// `w` must be a live waveform handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn graf_spectral_variance(
    w: *const GrafWaveform,
    out: *mut f64,
) -> GrafStatus {
    guard(|| {
        not_null!(w);
        not_null!(out);
        match spectral_variance_value(&(*w).inner) {
            Ok(v) => {
                *out = v;
                GrafStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Evaluate `PSL + lambda * SpectralVariance * alpha` of `e^(j*theta)` and
/// its gradient with respect to the phases: the differentiable entry point
/// for embedding the pipeline in other frameworks.
///
/// # Safety
/// `theta` must point to `n` readable doubles; `loss_out` to one writable
/// double; `grad_out` to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn graf_experiment_loss_grad(
    theta: *const f64,
    n: usize,
    lambda: f64,
    alpha: f64,
    g_k: usize,
    g_m: usize,
    loss_out: *mut f64,
    grad_out: *mut f64,
) -> GrafStatus {
    guard(|| {
        not_null!(theta);
        not_null!(loss_out);
        not_null!(grad_out);
        if n < 2 {
            set_error("experiment loss requires n >= 2");
            return GrafStatus::InvalidArgument;
        }
        let phases = std::slice::from_raw_parts(theta, n);
        let loss = LossKind::experiment(lambda, alpha, ExclusionRegion { g_k, g_m });
        let result = (|| -> graf_core::Result<(f64, Vec<f64>)> {
            let mut tape = Tape::new();
            let signal = signal_nodes(&mut tape, &Waveform::PhaseOnly(phases.to_vec()))?;
            let graph = loss.build(&mut tape, &signal)?;
            tape.set_root(graph.root)?;
            let value = tape.scalar_value(graph.root)?;
            let grads = tape.backward()?;
            let g = grads
                .real(signal.theta.expect("phase leaf"))
                .map(|a| a.data.clone())
                .unwrap_or_else(|| vec![0.0; n]);
            Ok((value, g))
        })();
        match result {
            Ok((value, grad)) => {
                *loss_out = value;
                std::ptr::copy_nonoverlapping(grad.as_ptr(), grad_out, n);
                GrafStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Run the full Adam optimization of the experiment loss from the seeded
/// random initialization and return the final waveform handle plus its
/// metrics (any metric out-pointer may be null to skip that value).
///
/// # Safety
/// `wave_out` must be writable; metric pointers must be writable when
/// non-null.
#[no_mangle]
pub unsafe extern "C" fn graf_optimize_experiment(
    n: usize,
    lambda: f64,
    alpha: f64,
    seed: u64,
    iterations: usize,
    learning_rate: f64,
    wave_out: *mut *mut GrafWaveform,
    loss_out: *mut f64,
    psl_db_out: *mut f64,
    spectral_variance_out: *mut f64,
) -> GrafStatus {
    guard(|| {
        not_null!(wave_out);
        let loss = LossKind::experiment(lambda, alpha, ExclusionRegion::default());
        let cfg = AdamConfig {
            iterations,
            lr: learning_rate,
            seed,
            ..AdamConfig::default()
        };
        let initial = initial_waveform(n, seed);
        match optimize_gradient(&initial, &loss, &cfg, GradientMode::PhaseParam) {
            Ok(record) => {
                if record.status != RunStatus::Ok {
                    set_error("optimization diverged (non-finite loss)");
                    return GrafStatus::NumericalError;
                }
                if !loss_out.is_null() {
                    *loss_out = record.final_metrics.loss;
                }
                if !psl_db_out.is_null() {
                    *psl_db_out = record.final_metrics.psl_db;
                }
                if !spectral_variance_out.is_null() {
                    *spectral_variance_out = record.final_metrics.spectral_variance;
                }
                *wave_out = Box::into_raw(Box::new(GrafWaveform {
                    inner: record.final_waveform.to_waveform(),
                }));
                GrafStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
