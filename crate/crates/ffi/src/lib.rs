//! C ABI for qpost: forest training and prediction, quantile averaging and
//! predictive distributions.
//!
//! Every fallible function returns a [`QpostStatus`]; on failure a message
//! is available from [`qpost_last_error_message`] on the same thread.
//! Objects are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qpost::combine::{vincentize, QuantileVector};
use qpost::dist::{DistError, PiecewiseCdf};
use qpost::error_model::{ErrorSample, ErrorTable};
use qpost::qrf::{CovariateVector, Forest, ForestConfig, QrfError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpostStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Io = 4,
    /// The distribution is a point mass and has no density.
    Degenerate = 5,
    /// A panic was caught; the library state is unaffected.
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QpostForestConfig {
    pub num_trees: usize,
    pub mtry: usize,
    pub min_node_size: usize,
    pub sample_count: usize,
    pub seed: u64,
    pub replace: bool,
}

impl From<QpostForestConfig> for ForestConfig {
    fn from(c: QpostForestConfig) -> Self {
        ForestConfig {
            num_trees: c.num_trees,
            mtry: c.mtry,
            min_node_size: c.min_node_size,
            sample_count: c.sample_count,
            seed: c.seed,
            replace: c.replace,
        }
    }
}

/// A trained quantile regression forest.
pub struct QpostForest(Forest);

/// A predictive distribution built from a quantile vector.
pub struct QpostCdf(PiecewiseCdf);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: QpostStatus,
    message: String,
}

impl Failure {
    fn new(status: QpostStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Failure::new(QpostStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(e: impl ToString) -> Self {
        Failure::new(QpostStatus::InvalidArgument, e.to_string())
    }
}

impl From<QrfError> for Failure {
    fn from(e: QrfError) -> Self {
        let status = match e {
            QrfError::Io(_) => QpostStatus::Io,
            _ => QpostStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<DistError> for Failure {
    fn from(e: DistError) -> Self {
        let status = match e {
            DistError::Degenerate(_) => QpostStatus::Degenerate,
            _ => QpostStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

fn set_last_error(message: Option<String>) {
    let c = message.map(|m| CString::new(m.replace('\0', " ")).expect("no interior nul"));
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QpostStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(None);
            QpostStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(Some(fail.message));
            fail.status
        }
        Err(_) => {
            set_last_error(Some("internal panic".into()));
            QpostStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(QpostStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

/// Message for the last failed call on this thread, or null after a
/// successful call. Valid until the next qpost call on this thread.
#[no_mangle]
pub extern "C" fn qpost_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// The library's default forest settings.
#[no_mangle]
pub extern "C" fn qpost_forest_config_default() -> QpostForestConfig {
    let c = ForestConfig::default();
    QpostForestConfig {
        num_trees: c.num_trees,
        mtry: c.mtry,
        min_node_size: c.min_node_size,
        sample_count: c.sample_count,
        seed: c.seed,
        replace: c.replace,
    }
}

/// Trains a forest on `n_rows` rows of (lead hours, model label, error).
///
/// # Safety
/// `leads`, `labels` and `errors` must each point to `n_rows` elements;
/// every label must be a nul-terminated string. `out_forest` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qpost_forest_train(
    leads: *const u32,
    labels: *const *const c_char,
    errors: *const f64,
    n_rows: usize,
    config: QpostForestConfig,
    out_forest: *mut *mut QpostForest,
) -> QpostStatus {
    guard(|| {
        let slot = out(out_forest, "out_forest")?;
        *slot = ptr::null_mut();
        let leads = slice(leads, n_rows, "leads")?;
        let labels = slice(labels, n_rows, "labels")?;
        let errors = slice(errors, n_rows, "errors")?;
        let rows = (0..n_rows)
            .map(|i| {
                Ok(ErrorSample {
                    lead_hours: leads[i],
                    model_label: string(labels[i], "label")?.to_string(),
                    error: errors[i],
                })
            })
            .collect::<Result<Vec<_>, Failure>>()?;
        let table = ErrorTable::from_rows(rows).map_err(Failure::invalid)?;
        let forest = Forest::train(&table, &config.into())?;
        *slot = Box::into_raw(Box::new(QpostForest(forest)));
        Ok(())
    })
}

/// Loads a forest saved by [`qpost_forest_save`] or the command line tool.
///
/// # Safety
/// `path` must be a nul-terminated string and `out_forest` writable.
#[no_mangle]
pub unsafe extern "C" fn qpost_forest_load(
    path: *const c_char,
    out_forest: *mut *mut QpostForest,
) -> QpostStatus {
    guard(|| {
        let slot = out(out_forest, "out_forest")?;
        *slot = ptr::null_mut();
        let forest = Forest::load(Path::new(string(path, "path")?))?;
        *slot = Box::into_raw(Box::new(QpostForest(forest)));
        Ok(())
    })
}

/// # Safety
/// `forest` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qpost_forest_save(
    forest: *const QpostForest,
    path: *const c_char,
) -> QpostStatus {
    guard(|| {
        let f = handle(forest, "forest")?;
        f.0.save(Path::new(string(path, "path")?))?;
        Ok(())
    })
}

/// Conditional error quantiles at `n_levels` increasing levels for one
/// (lead hours, model label) query, written to `out_values`.
///
/// # Safety
/// `forest` must be a live handle, `label` a nul-terminated string, and
/// `levels` and `out_values` must each hold `n_levels` elements.
#[no_mangle]
pub unsafe extern "C" fn qpost_forest_predict_quantiles(
    forest: *const QpostForest,
    lead_hours: u32,
    label: *const c_char,
    levels: *const f64,
    n_levels: usize,
    out_values: *mut f64,
) -> QpostStatus {
    guard(|| {
        let f = handle(forest, "forest")?;
        let x = CovariateVector::new(lead_hours, string(label, "label")?);
        let levels = slice(levels, n_levels, "levels")?;
        let out_values = slice_mut(out_values, n_levels, "out_values")?;
        let q = f.0.predict_quantiles(&x, levels)?;
        out_values.copy_from_slice(q.values());
        Ok(())
    })
}

/// Whether the forest saw `label` in training; unknown labels are
/// predicted as if they matched no label split.
///
/// # Safety
/// `forest` must be a live handle and `label` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qpost_forest_knows_label(
    forest: *const QpostForest,
    label: *const c_char,
    out_known: *mut bool,
) -> QpostStatus {
    guard(|| {
        let f = handle(forest, "forest")?;
        *out(out_known, "out_known")? = f.0.knows_label(string(label, "label")?);
        Ok(())
    })
}

/// # Safety
/// `forest` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qpost_forest_free(forest: *mut QpostForest) {
    if !forest.is_null() {
        drop(Box::from_raw(forest));
    }
}

/// Level-by-level mean of `n_inputs` quantile vectors sharing `levels`.
/// `values` is row-major, one row of `n_levels` values per input.
///
/// # Safety
/// `levels` and `out_values` must hold `n_levels` elements and `values`
/// `n_inputs * n_levels`.
#[no_mangle]
pub unsafe extern "C" fn qpost_vincentize(
    levels: *const f64,
    n_levels: usize,
    values: *const f64,
    n_inputs: usize,
    out_values: *mut f64,
) -> QpostStatus {
    guard(|| {
        let levels = slice(levels, n_levels, "levels")?;
        let total = n_inputs
            .checked_mul(n_levels)
            .ok_or_else(|| Failure::invalid("size overflow"))?;
        let values = slice(values, total, "values")?;
        let out_values = slice_mut(out_values, n_levels, "out_values")?;
        if n_levels == 0 {
            return Err(Failure::invalid("no levels"));
        }
        let inputs = values
            .chunks(n_levels)
            .map(|row| QuantileVector::new(levels.to_vec(), row.to_vec()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(Failure::invalid)?;
        let q = vincentize(&inputs).map_err(Failure::invalid)?;
        out_values.copy_from_slice(q.values());
        Ok(())
    })
}

/// Builds a distribution from `n` (level, value) pairs.
///
/// # Safety
/// `levels` and `values` must hold `n` elements; `out_cdf` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qpost_cdf_build(
    levels: *const f64,
    values: *const f64,
    n: usize,
    out_cdf: *mut *mut QpostCdf,
) -> QpostStatus {
    guard(|| {
        let slot = out(out_cdf, "out_cdf")?;
        *slot = ptr::null_mut();
        let q = QuantileVector::new(
            slice(levels, n, "levels")?.to_vec(),
            slice(values, n, "values")?.to_vec(),
        )
        .map_err(Failure::invalid)?;
        *slot = Box::into_raw(Box::new(QpostCdf(PiecewiseCdf::from_quantiles(&q))));
        Ok(())
    })
}

unsafe fn eval(
    cdf: *const QpostCdf,
    out_value: *mut f64,
    f: impl FnOnce(&PiecewiseCdf) -> Result<f64, Failure>,
) -> QpostStatus {
    guard(|| {
        let d = handle(cdf, "cdf")?;
        let slot = out(out_value, "out_value")?;
        *slot = f(&d.0)?;
        Ok(())
    })
}

/// `P(X <= x)`.
///
/// # Safety
/// `cdf` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn qpost_cdf_eval(
    cdf: *const QpostCdf,
    x: f64,
    out_value: *mut f64,
) -> QpostStatus {
    eval(cdf, out_value, |d| Ok(d.cdf(x)))
}

/// Inverse CDF for `p` in (0, 1).
///
/// # Safety
/// `cdf` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn qpost_cdf_quantile(
    cdf: *const QpostCdf,
    p: f64,
    out_value: *mut f64,
) -> QpostStatus {
    eval(cdf, out_value, |d| Ok(d.quantile(p)?))
}

/// Density at `x`; `QPOST_STATUS_DEGENERATE` for a point mass.
///
/// # Safety
/// `cdf` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn qpost_cdf_density(
    cdf: *const QpostCdf,
    x: f64,
    out_value: *mut f64,
) -> QpostStatus {
    eval(cdf, out_value, |d| Ok(d.density(x)?))
}

/// `P(X < threshold)`.
///
/// # Safety
/// `cdf` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn qpost_cdf_prob_below(
    cdf: *const QpostCdf,
    threshold: f64,
    out_value: *mut f64,
) -> QpostStatus {
    eval(cdf, out_value, |d| Ok(d.prob_below(threshold)))
}

/// Continuous ranked probability score against observation `y`.
///
/// # Safety
/// `cdf` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn qpost_cdf_crps(
    cdf: *const QpostCdf,
    y: f64,
    out_value: *mut f64,
) -> QpostStatus {
    eval(cdf, out_value, |d| Ok(d.crps(y)))
}

/// Negative log density at `y`; `QPOST_STATUS_DEGENERATE` for a point mass.
///
/// # Safety
/// `cdf` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn qpost_cdf_log_score(
    cdf: *const QpostCdf,
    y: f64,
    out_value: *mut f64,
) -> QpostStatus {
    eval(cdf, out_value, |d| Ok(-d.log_density(y)?))
}

/// Writes `n` seeded draws to `out_values`.
///
/// # Safety
/// `cdf` must be a live handle and `out_values` must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn qpost_cdf_sample(
    cdf: *const QpostCdf,
    n: usize,
    seed: u64,
    out_values: *mut f64,
) -> QpostStatus {
    guard(|| {
        let d = handle(cdf, "cdf")?;
        let out_values = slice_mut(out_values, n, "out_values")?;
        out_values.copy_from_slice(&d.0.sample(n, seed));
        Ok(())
    })
}

/// # Safety
/// `cdf` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qpost_cdf_free(cdf: *mut QpostCdf) {
    if !cdf.is_null() {
        drop(Box::from_raw(cdf));
    }
}
