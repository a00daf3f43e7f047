//! C ABI for the tsnmf library.
//!
//! Results live behind an opaque handle; every function returns a status
//! code and writes its output through pointers. A human-readable message
//! for the most recent failure on the calling thread is available through
//! [`tsnmf_last_error_message`].
//!
//! Matrix buffers are column-major: the data matrix is n x m (points as
//! columns), the templates come back as n x k, the coefficients as k x m.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;
use tsnmf::{factorize, FactorizationResult, SearchConfig, StepTag, TsnmfError};

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsnmfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A parameter was out of range (bad epsilon, bad k, bad dimensions).
    InvalidArgument = 2,
    /// The data violates a requirement (zero column, too few directions).
    DataError = 3,
    /// The solve failed numerically.
    NumericalError = 4,
    /// An output buffer was too small.
    BufferTooSmall = 5,
    /// An index was out of range.
    OutOfRange = 6,
    /// The implementation panicked; state is unchanged.
    InternalError = 7,
}

fn status_of(err: &TsnmfError) -> TsnmfStatus {
    use tsnmf::GeometryError;
    match err {
        TsnmfError::InvalidConfig(_) => TsnmfStatus::InvalidArgument,
        TsnmfError::Geometry(GeometryError::ZeroColumn(_)) => TsnmfStatus::DataError,
        TsnmfError::InsufficientData { .. } => TsnmfStatus::DataError,
        _ => TsnmfStatus::NumericalError,
    }
}

/// Opaque factorization result handle.
pub struct TsnmfResult {
    inner: FactorizationResult,
}

/// Run the factorization on a column-major n x m data matrix.
///
/// On success writes a heap-allocated handle to `out`; release it with
/// [`tsnmf_result_free`].
///
/// # Safety
/// `x` must point to `n * m` readable doubles and `out` to a writable
/// pointer slot.
#[no_mangle]
pub unsafe extern "C" fn tsnmf_factorize(
    x: *const f64,
    n: usize,
    m: usize,
    k: usize,
    epsilon: f64,
    i_max: usize,
    seed: u64,
    out: *mut *mut TsnmfResult,
) -> TsnmfStatus {
    if x.is_null() || out.is_null() {
        set_last_error("null argument");
        return TsnmfStatus::NullArgument;
    }
    if n == 0 || m == 0 {
        set_last_error("data matrix must be nonempty");
        return TsnmfStatus::InvalidArgument;
    }
    let data = std::slice::from_raw_parts(x, n * m);
    let matrix = DMatrix::from_column_slice(n, m, data);
    let config = SearchConfig::new(epsilon, i_max, seed);
    let outcome = catch_unwind(AssertUnwindSafe(|| factorize(&matrix, k, &config)));
    match outcome {
        Ok(Ok(result)) => {
            *out = Box::into_raw(Box::new(TsnmfResult { inner: result }));
            TsnmfStatus::Ok
        }
        Ok(Err(err)) => {
            set_last_error(&err.to_string());
            status_of(&err)
        }
        Err(_) => {
            set_last_error("internal panic");
            TsnmfStatus::InternalError
        }
    }
}

/// Release a result handle. Null is a no-op.
///
/// # Safety
/// `result` must be a pointer from [`tsnmf_factorize`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsnmf_result_free(result: *mut TsnmfResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

unsafe fn with_result<T>(
    result: *const TsnmfResult,
    out: *mut T,
    f: impl FnOnce(&FactorizationResult) -> T,
) -> TsnmfStatus {
    if result.is_null() || out.is_null() {
        set_last_error("null argument");
        return TsnmfStatus::NullArgument;
    }
    *out = f(&(*result).inner);
    TsnmfStatus::Ok
}

/// Dimensions of the factorization: ambient n, templates k, data points m.
///
/// # Safety
/// `result` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsnmf_result_dims(
    result: *const TsnmfResult,
    n: *mut usize,
    k: *mut usize,
    m: *mut usize,
) -> TsnmfStatus {
    if result.is_null() || n.is_null() || k.is_null() || m.is_null() {
        set_last_error("null argument");
        return TsnmfStatus::NullArgument;
    }
    let inner = &(*result).inner;
    *n = inner.templates.dim();
    *k = inner.templates.column_count();
    *m = inner.coefficients.column_count();
    TsnmfStatus::Ok
}

/// Final squared Frobenius residual.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsnmf_result_fit(
    result: *const TsnmfResult,
    out: *mut f64,
) -> TsnmfStatus {
    with_result(result, out, |r| r.fit)
}

/// Residual of the initialization, before any search iteration.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsnmf_result_initial_fit(
    result: *const TsnmfResult,
    out: *mut f64,
) -> TsnmfStatus {
    with_result(result, out, |r| r.initial_fit)
}

/// Geodesic spread of the final templates.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsnmf_result_spread(
    result: *const TsnmfResult,
    out: *mut f64,
) -> TsnmfStatus {
    with_result(result, out, |r| r.spread)
}

/// Hyper-area diagnostic of the final templates.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsnmf_result_area(
    result: *const TsnmfResult,
    out: *mut f64,
) -> TsnmfStatus {
    with_result(result, out, |r| r.area)
}

unsafe fn copy_matrix(matrix: &DMatrix<f64>, buffer: *mut f64, len: usize) -> TsnmfStatus {
    if buffer.is_null() {
        set_last_error("null argument");
        return TsnmfStatus::NullArgument;
    }
    let needed = matrix.nrows() * matrix.ncols();
    if len < needed {
        set_last_error("output buffer too small");
        return TsnmfStatus::BufferTooSmall;
    }
    let out = std::slice::from_raw_parts_mut(buffer, needed);
    out.copy_from_slice(matrix.as_slice());
    TsnmfStatus::Ok
}

/// Copy the templates W (column-major n x k) into `buffer`.
///
/// # Safety
/// `result` must be a live handle; `buffer` must hold `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn tsnmf_result_copy_templates(
    result: *const TsnmfResult,
    buffer: *mut f64,
    len: usize,
) -> TsnmfStatus {
    if result.is_null() {
        set_last_error("null argument");
        return TsnmfStatus::NullArgument;
    }
    copy_matrix((*result).inner.templates.matrix(), buffer, len)
}

/// Copy the coefficients H (column-major k x m) into `buffer`.
///
/// # Safety
/// `result` must be a live handle; `buffer` must hold `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn tsnmf_result_copy_coefficients(
    result: *const TsnmfResult,
    buffer: *mut f64,
    len: usize,
) -> TsnmfStatus {
    if result.is_null() {
        set_last_error("null argument");
        return TsnmfStatus::NullArgument;
    }
    copy_matrix((*result).inner.coefficients.entries(), buffer, len)
}

/// Number of iteration trace records.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsnmf_result_trace_len(
    result: *const TsnmfResult,
    out: *mut usize,
) -> TsnmfStatus {
    with_result(result, out, |r| r.trace.len())
}

/// Which step an iteration accepted: 0 refit, 1 dilation, 2 poll+,
/// 3 poll-, 4 all-rejected.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsnmfStep {
    Refit = 0,
    Dilation = 1,
    PollPlus = 2,
    PollMinus = 3,
    Reject = 4,
}

/// One trace record: the accepted step plus the post-update step size, fit
/// and spread.
///
/// # Safety
/// `result` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsnmf_result_trace_entry(
    result: *const TsnmfResult,
    index: usize,
    step: *mut TsnmfStep,
    alpha: *mut f64,
    fit: *mut f64,
    spread: *mut f64,
) -> TsnmfStatus {
    if result.is_null() || step.is_null() || alpha.is_null() || fit.is_null() || spread.is_null() {
        set_last_error("null argument");
        return TsnmfStatus::NullArgument;
    }
    let trace = &(*result).inner.trace;
    let Some(record) = trace.get(index) else {
        set_last_error("trace index out of range");
        return TsnmfStatus::OutOfRange;
    };
    *step = match record.step {
        StepTag::Refit => TsnmfStep::Refit,
        StepTag::Dilation => TsnmfStep::Dilation,
        StepTag::PollPlus => TsnmfStep::PollPlus,
        StepTag::PollMinus => TsnmfStep::PollMinus,
        StepTag::Reject => TsnmfStep::Reject,
    };
    *alpha = record.alpha;
    *fit = record.fit;
    *spread = record.spread;
    TsnmfStatus::Ok
}

/// Deterministic per-member seed used by epsilon sweeps.
#[no_mangle]
pub extern "C" fn tsnmf_child_seed(seed: u64, index: usize) -> u64 {
    tsnmf::child_seed(seed, index)
}

/// Message of the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tsnmf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}
