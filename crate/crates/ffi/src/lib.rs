//! C ABI over `ubi-core`.
//!
//! Every fallible function returns a [`UbiStatus`] and writes its result
//! through an out pointer. On failure, [`ubi_last_error`] describes the most
//! recent error on the calling thread. Models are opaque handles released
//! with [`ubi_model_free`]; strings returned by the library are released
//! with [`ubi_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ubi_core::eval::roc_auc;
use ubi_core::features::classify_accel_event;
use ubi_core::glm::{backward_eliminate, compute_premium, fit_logistic, paper_reference, DesignMatrix, FitOptions, FittedModel, GlmError};
use ubi_core::ingest::{Axis, GeoPoint};
use ubi_core::labeling::{classify_severity, ClaimRecord, Target};
use ubi_core::trips::haversine_km;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UbiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed JSON or text input.
    Parse = 3,
    /// Single-class target, separation or collinearity.
    Fit = 4,
    /// A feature required by the model was not supplied.
    MissingFeature = 5,
    Panic = 6,
}

/// Acceleration axis for [`ubi_classify_accel`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UbiAxis {
    Longitudinal = 0,
    Lateral = 1,
}

/// Opaque fitted or reference model.
pub struct UbiModel {
    inner: FittedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(bytes).expect("nul bytes removed"));
}

struct Failure(UbiStatus, String);

impl From<GlmError> for Failure {
    fn from(e: GlmError) -> Self {
        let status = match e {
            GlmError::DegenerateTarget { .. } | GlmError::Separation { .. } | GlmError::Collinearity { .. } => UbiStatus::Fit,
            GlmError::MissingFeature(_) => UbiStatus::MissingFeature,
            GlmError::ModelFile(_) => UbiStatus::Parse,
            _ => UbiStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(UbiStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status and last-error text.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> UbiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            UbiStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            UbiStatus::Panic
        }
    }
}

fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: caller guarantees `p` is null or valid for writes.
    unsafe { p.as_mut() }.ok_or_else(|| Failure(UbiStatus::NullPointer, format!("`{name}` is null")))
}

fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(UbiStatus::NullPointer, format!("`{name}` is null")));
    }
    // SAFETY: non-null and, per contract, a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| invalid(format!("`{name}` is not UTF-8")))
}

fn slice_arg<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(UbiStatus::NullPointer, format!("`{name}` is null")));
    }
    // SAFETY: caller guarantees `n` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, n) })
}

fn model_ref<'a>(m: *const UbiModel) -> Result<&'a FittedModel, Failure> {
    // SAFETY: handles come from this library and are live until freed.
    unsafe { m.as_ref() }
        .map(|m| &m.inner)
        .ok_or_else(|| Failure(UbiStatus::NullPointer, "`model` is null".into()))
}

fn give_string(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    let out = out_ref(out, "out")?;
    *out = CString::new(s).map_err(|_| invalid("string contains NUL"))?.into_raw();
    Ok(())
}

fn give_model(m: FittedModel, out: *mut *mut UbiModel) -> Result<(), Failure> {
    let out = out_ref(out, "out")?;
    *out = Box::into_raw(Box::new(UbiModel { inner: m }));
    Ok(())
}

/// Text of the last error on this thread; empty after a success. The
/// pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn ubi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ubi_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ubi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Great-circle distance in km between two WGS84 points.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ubi_haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64, out: *mut f64) -> UbiStatus {
    guard(|| {
        if ![lat1, lon1, lat2, lon2].iter().all(|v| v.is_finite()) {
            return Err(invalid("coordinates must be finite"));
        }
        *out_ref(out, "out")? = haversine_km(GeoPoint { lat: lat1, lon: lon1 }, GeoPoint { lat: lat2, lon: lon2 });
        Ok(())
    })
}

/// Band index of an acceleration event: 0..=8 for a1..a3, d1..d3, s1..s3,
/// or -1 when the event is below every band.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ubi_classify_accel(axis: UbiAxis, accel_g: f64, out: *mut i32) -> UbiStatus {
    guard(|| {
        if !accel_g.is_finite() {
            return Err(invalid("acceleration must be finite"));
        }
        let axis = match axis {
            UbiAxis::Longitudinal => Axis::Longitudinal,
            UbiAxis::Lateral => Axis::Lateral,
        };
        *out_ref(out, "out")? = classify_accel_event(axis, accel_g).map_or(-1, |b| b.index() as i32);
        Ok(())
    })
}

/// Severity class of a claim: 0 none, 1 weak, 2 medium, 3 strong.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ubi_classify_severity(loss_size: f64, ins_sum: f64, culprit: bool, out: *mut i32) -> UbiStatus {
    guard(|| {
        let claim = ClaimRecord {
            device_id: String::new(),
            loss_size,
            ins_sum,
            culprit,
        };
        let s = classify_severity(&claim).map_err(|e| invalid(e.to_string()))?;
        *out_ref(out, "out")? = s as i32;
        Ok(())
    })
}

/// ROC AUC of `scores` against 0/1 `labels`.
///
/// # Safety
/// `scores` and `labels` must each hold `n` readable elements; `out` must
/// be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ubi_roc_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> UbiStatus {
    guard(|| {
        let s = slice_arg(scores, n, "scores")?;
        let l = slice_arg(labels, n, "labels")?;
        *out_ref(out, "out")? = roc_auc(s, l).map_err(|e| invalid(e.to_string()))?;
        Ok(())
    })
}

/// Premium: `p · loss + admin + margin`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ubi_premium(p_accident: f64, predicted_loss: f64, admin_costs: f64, margin: f64, out: *mut f64) -> UbiStatus {
    guard(|| {
        *out_ref(out, "out")? = compute_premium(p_accident, predicted_loss, admin_costs, margin)?;
        Ok(())
    })
}

fn parse_target(t: *const c_char) -> Result<Target, Failure> {
    str_arg(t, "target")?.parse().map_err(invalid)
}

/// The published model for `target` (`any`, `weak`, `medium`, `strong`).
///
/// # Safety
/// `target` must be a NUL-terminated string; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ubi_model_paper_reference(target: *const c_char, out: *mut *mut UbiModel) -> UbiStatus {
    guard(|| give_model(paper_reference(parse_target(target)?), out))
}

/// Fits a logistic model on a row-major `n_rows × n_features` matrix.
/// With `alpha` in [0, 1] insignificant features are eliminated backwards;
/// a negative `alpha` keeps every feature.
///
/// # Safety
/// `names` must hold `n_features` NUL-terminated strings, `x` hold
/// `n_rows * n_features` values, `y` hold `n_rows` values; `out` null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ubi_model_fit(
    names: *const *const c_char,
    n_features: usize,
    x: *const f64,
    y: *const u8,
    n_rows: usize,
    target: *const c_char,
    alpha: f64,
    out: *mut *mut UbiModel,
) -> UbiStatus {
    guard(|| {
        let name_ptrs = slice_arg(names, n_features, "names")?;
        let names = name_ptrs
            .iter()
            .map(|&p| str_arg(p, "names[i]").map(String::from))
            .collect::<Result<Vec<_>, _>>()?;
        let len = n_rows.checked_mul(n_features).ok_or_else(|| invalid("matrix size overflows"))?;
        let x = slice_arg(x, len, "x")?;
        let y = slice_arg(y, n_rows, "y")?;
        let target = str_arg(target, "target")?;
        let rows: Vec<Vec<f64>> = if n_features == 0 {
            vec![Vec::new(); n_rows]
        } else {
            x.chunks(n_features).map(<[f64]>::to_vec).collect()
        };
        let design = DesignMatrix::from_rows(names, &rows, y.to_vec())?;
        let opts = FitOptions::default();
        let model = if alpha < 0.0 {
            fit_logistic(&design, target, &opts)?
        } else {
            backward_eliminate(&design, target, alpha, &opts)?
        };
        give_model(model, out)
    })
}

/// Reads a model from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ubi_model_from_json(json: *const c_char, out: *mut *mut UbiModel) -> UbiStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let m = FittedModel::from_json(text).map_err(|e| Failure(UbiStatus::Parse, e.to_string()))?;
        give_model(m, out)
    })
}

/// JSON form of a model; release with [`ubi_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ubi_model_to_json(model: *const UbiModel, out: *mut *mut c_char) -> UbiStatus {
    guard(|| give_string(model_ref(model)?.to_json(), out))
}

/// Accident probability for one observation given by parallel arrays of
/// feature names and values. Features the model does not use are ignored.
///
/// # Safety
/// `names` and `values` must each hold `n` elements; `model` must be a live
/// handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ubi_model_predict(
    model: *const UbiModel,
    names: *const *const c_char,
    values: *const f64,
    n: usize,
    out: *mut f64,
) -> UbiStatus {
    guard(|| {
        let m = model_ref(model)?;
        let name_ptrs = slice_arg(names, n, "names")?;
        let values = slice_arg(values, n, "values")?;
        let names = name_ptrs
            .iter()
            .map(|&p| str_arg(p, "names[i]"))
            .collect::<Result<Vec<_>, _>>()?;
        let p = m.predict_proba(|f| names.iter().position(|&n| n == f).map(|i| values[i]))?;
        *out_ref(out, "out")? = p;
        Ok(())
    })
}

/// Number of model columns, intercept included; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ubi_model_n_columns(model: *const UbiModel) -> usize {
    model_ref(model).map_or(0, |m| m.k())
}

/// Name of column `i` (`const` for the intercept); release with
/// [`ubi_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ubi_model_column_name(model: *const UbiModel, i: usize, out: *mut *mut c_char) -> UbiStatus {
    guard(|| {
        let m = model_ref(model)?;
        let name = m.columns.get(i).ok_or_else(|| invalid(format!("column {i} out of range")))?;
        give_string(name.clone(), out)
    })
}

/// Coefficient and standard error of column `i`. Either out pointer may be
/// null.
///
/// # Safety
/// `model` must be a live handle; out pointers null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ubi_model_coefficient(model: *const UbiModel, i: usize, coef: *mut f64, std_error: *mut f64) -> UbiStatus {
    guard(|| {
        let m = model_ref(model)?;
        if i >= m.k() {
            return Err(invalid(format!("column {i} out of range")));
        }
        if let Some(c) = coef.as_mut() {
            *c = m.coefficients[i];
        }
        if let Some(s) = std_error.as_mut() {
            *s = m.std_errors[i];
        }
        Ok(())
    })
}

/// Log-likelihood and AIC of a model. Either out pointer may be null.
///
/// # Safety
/// `model` must be a live handle; out pointers null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ubi_model_fit_stats(model: *const UbiModel, log_likelihood: *mut f64, aic: *mut f64) -> UbiStatus {
    guard(|| {
        let m = model_ref(model)?;
        if let Some(l) = log_likelihood.as_mut() {
            *l = m.log_likelihood;
        }
        if let Some(a) = aic.as_mut() {
            *a = m.aic;
        }
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ubi_model_free(model: *mut UbiModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
