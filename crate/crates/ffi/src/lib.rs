//! C ABI over `loorisk`.
//!
//! Objects cross the boundary as opaque pointers created by `lr_*_new` and
//! released with the matching `lr_*_free`. Every fallible call returns an
//! [`LrStatus`]; on failure the message is kept per thread and can be read
//! with [`lr_last_error_message`]. Panics are caught and reported as
//! [`LrStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use loorisk::bounds::{compute_cb, compute_cv_logistic};
use loorisk::risk::{alo, kfold_cv, lo_exact_detailed, RiskReport};
use loorisk::{Dataset, Error, ErrorFn, FitResult, Loss, ModelSpec, Regularizer, SolverOpts};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    NotConverged = 4,
    Numerical = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrLoss {
    Squared = 0,
    Logistic = 1,
    /// Parameter: the Huber scale.
    PseudoHuber = 2,
    /// Parameter: the smoothing scale.
    SmoothedAbs = 3,
    PoissonSoftRect = 4,
    /// Parameter: the shape.
    NegativeBinomial = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrRegularizer {
    Ridge = 0,
    /// Parameters: mix and sharpness.
    SmoothedElasticNet = 1,
    L1 = 2,
    /// Parameter: mix.
    ElasticNet = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrErrorFn {
    SameAsLoss = 0,
    SquaredError = 1,
}

/// Opaque dataset.
pub struct LrDataset(Dataset);
/// Opaque model specification.
pub struct LrModel(ModelSpec);
/// Opaque fit result.
pub struct LrFit(FitResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LrStatus {
    match e {
        Error::Dimension(_) => LrStatus::Dimension,
        Error::LooNotConverged { .. } | Error::FoldNotConverged { .. } | Error::FitNotConverged => {
            LrStatus::NotConverged
        }
        Error::NotPositiveDefinite(_) | Error::ZeroCurvature(_) | Error::Replicate { .. } => {
            LrStatus::Numerical
        }
        _ => LrStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (LrStatus, String)>) -> LrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LrStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside loorisk".into());
            LrStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (LrStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (LrStatus, String) {
    (LrStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (LrStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

fn solver_opts(tol: f64) -> SolverOpts {
    if tol > 0.0 {
        SolverOpts::default().with_tol(tol)
    } else {
        SolverOpts::default()
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL;
/// 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let k = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, k);
            *buf.add(k) = 0;
        }
        bytes.len()
    })
}

/// Creates a dataset from a row-major `n × p` design and `n` responses.
///
/// # Safety
/// `x` must point to `n * p` doubles, `y` to `n` doubles and `out` to a
/// writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lr_dataset_new(
    x: *const f64,
    n: usize,
    p: usize,
    y: *const f64,
    out: *mut *mut LrDataset,
) -> LrStatus {
    guard(|| {
        if x.is_null() || y.is_null() || out.is_null() {
            return Err(null("x, y or out"));
        }
        let len = n.checked_mul(p).ok_or((LrStatus::Dimension, "n * p overflows".to_string()))?;
        let xs = std::slice::from_raw_parts(x, len);
        let ys = std::slice::from_raw_parts(y, n);
        let rows: Vec<Vec<f64>> = (0..n).map(|i| xs[i * p..(i + 1) * p].to_vec()).collect();
        let data = Dataset::from_rows(&rows, ys).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(LrDataset(data)));
        Ok(())
    })
}

/// # Safety
/// `d` must come from [`lr_dataset_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lr_dataset_free(d: *mut LrDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Builds a model. `loss_param` is read by losses with a parameter;
/// `mix` and `sharpness` by the regularizers that take them.
///
/// # Safety
/// `out` must point to a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lr_model_new(
    loss: LrLoss,
    loss_param: f64,
    reg: LrRegularizer,
    mix: f64,
    sharpness: f64,
    lambda: f64,
    phi: LrErrorFn,
    out: *mut *mut LrModel,
) -> LrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let loss = match loss {
            LrLoss::Squared => Loss::Squared,
            LrLoss::Logistic => Loss::Logistic,
            LrLoss::PseudoHuber => Loss::PseudoHuber { huber_scale: loss_param },
            LrLoss::SmoothedAbs => Loss::SmoothedAbs { smooth_scale: loss_param },
            LrLoss::PoissonSoftRect => Loss::PoissonSoftRect,
            LrLoss::NegativeBinomial => Loss::NegativeBinomial { shape: loss_param },
        };
        let reg = match reg {
            LrRegularizer::Ridge => Regularizer::Ridge,
            LrRegularizer::SmoothedElasticNet => Regularizer::SmoothedElasticNet {
                mix,
                smooth_sharpness: sharpness,
            },
            LrRegularizer::L1 => Regularizer::L1,
            LrRegularizer::ElasticNet => Regularizer::ElasticNet { mix },
        };
        let phi = match phi {
            LrErrorFn::SameAsLoss => ErrorFn::SameAsLoss,
            LrErrorFn::SquaredError => ErrorFn::SquaredError,
        };
        let model = ModelSpec::new(loss, reg, lambda).with_phi(phi);
        model.validate().map_err(lib_err)?;
        *out = Box::into_raw(Box::new(LrModel(model)));
        Ok(())
    })
}

/// # Safety
/// `m` must come from [`lr_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lr_model_free(m: *mut LrModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Fits the model. `tol <= 0` selects the default tolerance. A fit that
/// stops without converging is still returned, with status
/// `NotConverged`.
///
/// # Safety
/// Handles must be live; `out` must point to a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lr_fit(
    data: *const LrDataset,
    model: *const LrModel,
    tol: f64,
    out: *mut *mut LrFit,
) -> LrStatus {
    guard(|| {
        let d = deref(data, "data")?;
        let m = deref(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let f = loorisk::fit(&d.0, &m.0, &solver_opts(tol)).map_err(lib_err)?;
        let converged = f.converged;
        *out = Box::into_raw(Box::new(LrFit(f)));
        if converged {
            Ok(())
        } else {
            Err((LrStatus::NotConverged, "fit did not reach the tolerance".into()))
        }
    })
}

/// # Safety
/// `f` must come from [`lr_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lr_fit_free(f: *mut LrFit) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Number of coefficients in the fit, or 0 for a null handle.
///
/// # Safety
/// `f` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn lr_fit_dim(f: *const LrFit) -> usize {
    f.as_ref().map_or(0, |f| f.0.beta_hat.len())
}

/// Copies the coefficients into `buf`, which must hold `lr_fit_dim` values.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lr_fit_coefficients(f: *const LrFit, buf: *mut f64, len: usize) -> LrStatus {
    guard(|| {
        let f = deref(f, "fit")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let b = &f.0.beta_hat;
        if len < b.len() {
            return Err((LrStatus::BufferTooSmall, format!("need {} values", b.len())));
        }
        ptr::copy_nonoverlapping(b.as_ptr(), buf, b.len());
        Ok(())
    })
}

/// Objective value and convergence flag of a fit.
///
/// # Safety
/// Pointers must be live or writable; `objective` and `converged` may be null.
#[no_mangle]
pub unsafe extern "C" fn lr_fit_summary(
    f: *const LrFit,
    objective: *mut f64,
    converged: *mut bool,
) -> LrStatus {
    guard(|| {
        let f = deref(f, "fit")?;
        if let Some(o) = objective.as_mut() {
            *o = f.0.objective;
        }
        if let Some(c) = converged.as_mut() {
            *c = f.0.converged;
        }
        Ok(())
    })
}

unsafe fn emit_report(
    r: &RiskReport,
    estimate: *mut f64,
    per_sample: *mut f64,
    len: usize,
) -> Result<(), (LrStatus, String)> {
    if estimate.is_null() {
        return Err(null("estimate"));
    }
    *estimate = r.estimate;
    if !per_sample.is_null() {
        if len < r.per_sample.len() {
            return Err((LrStatus::BufferTooSmall, format!("need {} values", r.per_sample.len())));
        }
        ptr::copy_nonoverlapping(r.per_sample.as_ptr(), per_sample, r.per_sample.len());
    }
    Ok(())
}

/// Exact leave-one-out estimate. `per_sample` may be null; otherwise it
/// receives `n` values.
///
/// # Safety
/// Handles must be live; buffers must be writable for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn lr_lo(
    data: *const LrDataset,
    model: *const LrModel,
    tol: f64,
    estimate: *mut f64,
    per_sample: *mut f64,
    len: usize,
) -> LrStatus {
    guard(|| {
        let d = deref(data, "data")?;
        let m = deref(model, "model")?;
        let run = lo_exact_detailed(&d.0, &m.0, &solver_opts(tol)).map_err(lib_err)?;
        emit_report(&run.report, estimate, per_sample, len)
    })
}

/// Approximate leave-one-out estimate from a fresh full fit. Entries at
/// the `H_ii → 1` pole are `+inf` and excluded from `estimate`.
///
/// # Safety
/// As [`lr_lo`].
#[no_mangle]
pub unsafe extern "C" fn lr_alo(
    data: *const LrDataset,
    model: *const LrModel,
    tol: f64,
    estimate: *mut f64,
    per_sample: *mut f64,
    len: usize,
) -> LrStatus {
    guard(|| {
        let d = deref(data, "data")?;
        let m = deref(model, "model")?;
        let full = loorisk::fit(&d.0, &m.0, &solver_opts(tol)).map_err(lib_err)?;
        let r = alo(&d.0, &m.0, &full).map_err(lib_err)?;
        emit_report(&r, estimate, per_sample, len)
    })
}

/// K-fold cross validation with a seeded partition.
///
/// # Safety
/// As [`lr_lo`].
#[no_mangle]
pub unsafe extern "C" fn lr_kfold(
    data: *const LrDataset,
    model: *const LrModel,
    k: usize,
    seed: u64,
    tol: f64,
    estimate: *mut f64,
    per_sample: *mut f64,
    len: usize,
) -> LrStatus {
    guard(|| {
        let d = deref(data, "data")?;
        let m = deref(model, "model")?;
        let r = kfold_cv(&d.0, &m.0, k, seed, &solver_opts(tol)).map_err(lib_err)?;
        emit_report(&r, estimate, per_sample, len)
    })
}

/// `(c0 c1 ρ √δ / ν)²`
#[no_mangle]
pub extern "C" fn lr_bound_cb(c0: f64, c1: f64, rho: f64, delta: f64, nu: f64) -> f64 {
    compute_cb(c0, c1, rho, delta, nu)
}

/// Variance constant for ridge logistic regression. At `(1, 1, 0.1)` this
/// returns 6511.52; the commonly quoted value there is 6311.52.
#[no_mangle]
pub extern "C" fn lr_bound_cv_logistic(rho: f64, delta: f64, lambda: f64) -> f64 {
    compute_cv_logistic(rho, delta, lambda)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
