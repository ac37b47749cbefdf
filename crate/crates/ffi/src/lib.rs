//! C interface to `d2ue`.
//!
//! Conventions:
//!
//! - Every fallible function returns a [`D2ueStatus`]; results are written
//!   through out-pointers only on `D2UE_STATUS_OK`.
//! - On failure the message is kept per thread and read with
//!   [`d2ue_last_error`].
//! - Ensembles are opaque handles created by [`d2ue_ensemble_load`] and
//!   released with [`d2ue_ensemble_free`].
//! - Panics never cross the boundary; they surface as `D2UE_STATUS_PANIC`.
//!
//! The header `include/d2ue.h` is generated from this file at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use d2ue::data::Image;
use d2ue::dsu::{self, Reduction, ScoreMethod};
use d2ue::error::Error;
use d2ue::metrics::{auroc, average_precision, LabeledScores};
use d2ue::rar::Ensemble;
use d2ue::similarity::{cka, FeatureMatrix};
use d2ue::tensor::Tensor;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum D2ueStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Array sizes disagree with each other or with the model.
    Shape = 3,
    /// An argument or stored configuration is invalid.
    Config = 4,
    /// Differentiation failed.
    Autodiff = 5,
    /// Training diverged.
    Training = 6,
    /// A metric is undefined for the given labels.
    Metric = 7,
    /// A file is malformed.
    Parse = 8,
    /// A file could not be read.
    Io = 9,
    /// The library panicked; the handle involved should be freed.
    Panic = 10,
}

/// Scoring method of [`d2ue_ensemble_score`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum D2ueMethod {
    /// Mean reconstruction error across learners.
    EnsRecon = 0,
    /// Per-pixel deviation of reconstructions.
    OutputUnc = 1,
    /// Per-pixel deviation of input gradient times absolute residual.
    Dsu = 2,
}

/// Pixel-to-image reduction of [`d2ue_ensemble_score`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum D2ueReduction {
    Mean = 0,
    Max = 1,
}

impl From<D2ueMethod> for ScoreMethod {
    fn from(m: D2ueMethod) -> Self {
        match m {
            D2ueMethod::EnsRecon => ScoreMethod::EnsRecon,
            D2ueMethod::OutputUnc => ScoreMethod::OutputUnc,
            D2ueMethod::Dsu => ScoreMethod::Dsu,
        }
    }
}

impl From<D2ueReduction> for Reduction {
    fn from(r: D2ueReduction) -> Self {
        match r {
            D2ueReduction::Mean => Reduction::Mean,
            D2ueReduction::Max => Reduction::Max,
        }
    }
}

/// Opaque trained ensemble.
pub struct D2ueEnsemble {
    inner: Ensemble,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    // Interior NULs would truncate the C string; replace them.
    let msg = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> D2ueStatus {
    match err {
        Error::Shape { .. } => D2ueStatus::Shape,
        Error::Config(_) => D2ueStatus::Config,
        Error::NonScalarRoot(_) | Error::MissingGrad(_) => D2ueStatus::Autodiff,
        Error::NonFiniteLoss { .. } => D2ueStatus::Training,
        Error::Metric(_) => D2ueStatus::Metric,
        Error::Parse { .. } => D2ueStatus::Parse,
        Error::Io { .. } => D2ueStatus::Io,
    }
}

/// A failure before reaching the library: status plus message.
struct Fail(D2ueStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(D2ueStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, recording its error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> D2ueStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => D2ueStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            D2ueStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or valid for `n` reads.
unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and valid for `n` reads per the caller contract.
    Ok(unsafe { std::slice::from_raw_parts(p, n) })
}

/// # Safety
/// `out` is null or valid for one write.
unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and writable per the caller contract.
    unsafe { out.write(value) };
    Ok(())
}

/// Message of the last failed call on this thread, or null if none failed.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn d2ue_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn d2ue_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads the ensemble directory written by `d2ue train`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn d2ue_ensemble_load(dir: *const c_char, out: *mut *mut D2ueEnsemble) -> D2ueStatus {
    guard(|| {
        if dir.is_null() {
            return Err(null("dir"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: non-null, NUL-terminated per the caller contract.
        let dir = unsafe { CStr::from_ptr(dir) }
            .to_str()
            .map_err(|e| Fail(D2ueStatus::InvalidUtf8, format!("dir is not UTF-8: {e}")))?;
        let inner = Ensemble::load(Path::new(dir))?;
        let handle = Box::into_raw(Box::new(D2ueEnsemble { inner }));
        // SAFETY: checked non-null above.
        unsafe { out.write(handle) };
        Ok(())
    })
}

/// Releases an ensemble. Null is ignored.
///
/// # Safety
/// `ensemble` is null or a handle from [`d2ue_ensemble_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn d2ue_ensemble_free(ensemble: *mut D2ueEnsemble) {
    if !ensemble.is_null() {
        // SAFETY: produced by Box::into_raw in d2ue_ensemble_load.
        drop(unsafe { Box::from_raw(ensemble) });
    }
}

/// Number of learners; 0 for a null handle.
///
/// # Safety
/// `ensemble` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2ue_ensemble_len(ensemble: *const D2ueEnsemble) -> usize {
    // SAFETY: null or live per the caller contract.
    unsafe { ensemble.as_ref() }.map_or(0, |e| e.inner.len())
}

/// Pixels per input image; 0 for a null handle.
///
/// # Safety
/// `ensemble` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2ue_ensemble_input_dim(ensemble: *const D2ueEnsemble) -> usize {
    // SAFETY: null or live per the caller contract.
    unsafe { ensemble.as_ref() }.map_or(0, |e| e.inner.input_dim())
}

/// Scores one `height × width` image (row-major pixels in [0, 1]).
/// Writes the image-level score to `out_score` and, when `out_map` is not
/// null, the per-pixel anomaly map (`height * width` values).
///
/// # Safety
/// `ensemble` is a live handle; `pixels` and a non-null `out_map` are valid
/// for `height * width` elements; `out_score` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn d2ue_ensemble_score(
    ensemble: *const D2ueEnsemble,
    pixels: *const f64,
    height: usize,
    width: usize,
    method: D2ueMethod,
    reduction: D2ueReduction,
    out_score: *mut f64,
    out_map: *mut f64,
) -> D2ueStatus {
    guard(|| {
        // SAFETY: null or live per the caller contract.
        let ens = unsafe { ensemble.as_ref() }.ok_or_else(|| null("ensemble"))?;
        let n = height
            .checked_mul(width)
            .ok_or_else(|| Fail(D2ueStatus::Shape, "height * width overflows".into()))?;
        // SAFETY: valid for n reads per the caller contract.
        let px = unsafe { slice(pixels, n, "pixels") }?;
        let image = Image::new(height, width, px.to_vec())?;
        let (score, map) = dsu::score_image(&ens.inner, &image, method.into(), reduction.into())?;
        // SAFETY: valid for one write per the caller contract.
        unsafe { write(out_score, score, "out_score") }?;
        if !out_map.is_null() {
            // SAFETY: valid for n writes per the caller contract.
            unsafe { std::slice::from_raw_parts_mut(out_map, n) }.copy_from_slice(&map.values);
        }
        Ok(())
    })
}

/// # Safety
/// `p` is valid for `rows * cols` reads.
unsafe fn features(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<FeatureMatrix, Fail> {
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Fail(D2ueStatus::Shape, format!("{what}: rows * cols overflows")))?;
    // SAFETY: forwarded caller contract.
    let data = unsafe { slice(p, n, what) }?.to_vec();
    Ok(FeatureMatrix::new(Tensor::new(&[rows, cols], data)?)?)
}

/// Linear CKA between row-major feature matrices `p` (`rows × p_cols`) and
/// `q` (`rows × q_cols`).
///
/// # Safety
/// `p` and `q` are valid for their element counts; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn d2ue_cka(
    p: *const f64,
    q: *const f64,
    rows: usize,
    p_cols: usize,
    q_cols: usize,
    out: *mut f64,
) -> D2ueStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (p, q) = unsafe { (features(p, rows, p_cols, "p")?, features(q, rows, q_cols, "q")?) };
        let v = cka(&p, &q)?;
        // SAFETY: forwarded caller contract.
        unsafe { write(out, v, "out") }
    })
}

/// # Safety
/// `scores` and `labels` are valid for `n` reads.
unsafe fn labeled(scores: *const f64, labels: *const u8, n: usize) -> Result<LabeledScores, Fail> {
    // SAFETY: forwarded caller contract.
    let (s, l) = unsafe { (slice(scores, n, "scores")?, slice(labels, n, "labels")?) };
    Ok(LabeledScores::new(s.to_vec(), l.to_vec())?)
}

/// Area under the ROC curve of `n` scores with 0/1 labels (1 = anomalous).
///
/// # Safety
/// `scores` and `labels` are valid for `n` reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn d2ue_auroc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> D2ueStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let data = unsafe { labeled(scores, labels, n) }?;
        let v = auroc(&data)?;
        // SAFETY: forwarded caller contract.
        unsafe { write(out, v, "out") }
    })
}

/// Average precision of `n` scores with 0/1 labels (1 = anomalous).
///
/// # Safety
/// `scores` and `labels` are valid for `n` reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn d2ue_average_precision(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> D2ueStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let data = unsafe { labeled(scores, labels, n) }?;
        let v = average_precision(&data)?;
        // SAFETY: forwarded caller contract.
        unsafe { write(out, v, "out") }
    })
}
