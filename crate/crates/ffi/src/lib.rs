//! C ABI over the explanation engine.
//!
//! All objects cross the boundary as opaque handles that the caller frees
//! with the matching `*_free` function. Every fallible call returns a
//! `GadgetStatus`; on failure `gadget_last_error` describes what happened.
//! Strings returned through out-parameters are released with
//! `gadget_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gadget::data::{load_dataset, Dataset};
use gadget::gadget::{fit_tree, regional_effects, GadgetConfig, Method};
use gadget::interactions::InteractionReport;
use gadget::learners::{fit, LearnerSpec, SharedPredictor};
use gadget::pint::{run_pint, PintConfig};
use gadget::GadgetError;
use ndarray::{Array2, ArrayView2};
use serde::Deserialize;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GadgetStatus {
    Ok = 0,
    NullPointer = 1,
    Usage = 2,
    Data = 3,
    Numeric = 4,
    InvalidUtf8 = 5,
    Panic = 6,
}

pub struct GadgetDataset {
    inner: Dataset,
}

pub struct GadgetModel {
    inner: SharedPredictor,
}

pub struct GadgetTree {
    inner: gadget::gadget::GadgetTree,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn status_of(e: &GadgetError) -> GadgetStatus {
    match e.exit_code() {
        2 => GadgetStatus::Usage,
        3 => GadgetStatus::Data,
        _ => GadgetStatus::Numeric,
    }
}

enum Failure {
    Null(&'static str),
    Utf8,
    Engine(GadgetError),
}

impl From<GadgetError> for Failure {
    fn from(e: GadgetError) -> Self {
        Failure::Engine(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Engine(GadgetError::Usage(format!("invalid JSON: {e}")))
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GadgetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GadgetStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            GadgetStatus::NullPointer
        }
        Ok(Err(Failure::Utf8)) => {
            set_error("string argument is not valid UTF-8");
            GadgetStatus::InvalidUtf8
        }
        Ok(Err(Failure::Engine(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_default();
            set_error(format!("internal panic: {what}"));
            GadgetStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8)
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    let c = CString::new(s).map_err(|_| Failure::Engine(GadgetError::Numeric("output contains a NUL byte".into())))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gadget_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gadget_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn gadget_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a headered CSV; `target` names the response column.
///
/// # Safety
/// `path` and `target` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gadget_dataset_from_csv(path: *const c_char, target: *const c_char, out: *mut *mut GadgetDataset) -> GadgetStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let target = str_arg(target, "target")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let d = load_dataset(Path::new(path), target, None)?;
        *out = Box::into_raw(Box::new(GadgetDataset { inner: d }));
        Ok(())
    })
}

/// Build a numeric dataset from a row-major `n_rows x n_features` matrix.
///
/// # Safety
/// `x` must point to `n_rows * n_features` doubles and `y` to `n_rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn gadget_dataset_from_matrix(
    x: *const f64,
    n_rows: usize,
    n_features: usize,
    y: *const f64,
    out: *mut *mut GadgetDataset,
) -> GadgetStatus {
    guard(|| {
        if x.is_null() {
            return Err(Failure::Null("x"));
        }
        if y.is_null() {
            return Err(Failure::Null("y"));
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let xs = std::slice::from_raw_parts(x, n_rows * n_features);
        let ys = std::slice::from_raw_parts(y, n_rows);
        let m = Array2::from_shape_vec((n_rows, n_features), xs.to_vec()).map_err(|e| GadgetError::Data(e.to_string()))?;
        let d = Dataset::from_numeric(m, ys.to_vec())?;
        *out = Box::into_raw(Box::new(GadgetDataset { inner: d }));
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gadget_dataset_shape(d: *const GadgetDataset, n_rows: *mut usize, n_features: *mut usize) -> GadgetStatus {
    guard(|| {
        let d = handle(d, "dataset")?;
        if n_rows.is_null() || n_features.is_null() {
            return Err(Failure::Null("out"));
        }
        *n_rows = d.inner.n_rows();
        *n_features = d.inner.n_features();
        Ok(())
    })
}

/// # Safety
/// `d` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn gadget_dataset_free(d: *mut GadgetDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Train a learner described by JSON, e.g. `{"kind":"bagged-trees","n_trees":50,"max_depth":10,"min_leaf":3,"seed":1}`.
///
/// # Safety
/// Pointers must be valid; `spec_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gadget_model_fit(d: *const GadgetDataset, spec_json: *const c_char, out: *mut *mut GadgetModel) -> GadgetStatus {
    guard(|| {
        let d = handle(d, "dataset")?;
        let spec: LearnerSpec = serde_json::from_str(str_arg(spec_json, "spec_json")?)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let m = fit(&spec, &d.inner)?;
        *out = Box::into_raw(Box::new(GadgetModel { inner: m }));
        Ok(())
    })
}

/// Predict `n_rows` rows (row-major) into `out`, which holds `n_rows` doubles.
///
/// # Safety
/// `x` must hold `n_rows * n_features` doubles and `out` room for `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn gadget_model_predict(m: *const GadgetModel, x: *const f64, n_rows: usize, n_features: usize, out: *mut f64) -> GadgetStatus {
    guard(|| {
        let m = handle(m, "model")?;
        if x.is_null() {
            return Err(Failure::Null("x"));
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let xs = std::slice::from_raw_parts(x, n_rows * n_features);
        let view = ArrayView2::from_shape((n_rows, n_features), xs).map_err(|e| GadgetError::Data(e.to_string()))?;
        let pred = m.inner.predict(view)?;
        std::slice::from_raw_parts_mut(out, n_rows).copy_from_slice(&pred);
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn gadget_model_free(m: *mut GadgetModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeRequest {
    method: Method,
    #[serde(rename = "S")]
    s: Option<Vec<usize>>,
    #[serde(rename = "Z")]
    z: Option<Vec<usize>>,
    max_depth: Option<usize>,
    min_node_size: Option<usize>,
    gamma: Option<f64>,
    grid_size: Option<usize>,
    sd_recalculate: Option<bool>,
    seed: Option<u64>,
}

impl TreeRequest {
    fn config(&self, p: usize) -> GadgetConfig {
        let all: Vec<usize> = (0..p).collect();
        let mut c = GadgetConfig::new(self.method, self.s.clone().unwrap_or_else(|| all.clone()), self.z.clone().unwrap_or(all));
        if let Some(v) = self.max_depth {
            c.stop.max_depth = v;
        }
        if let Some(v) = self.min_node_size {
            c.stop.min_node_size = v;
        }
        if let Some(v) = self.gamma {
            c.stop.gamma = v;
        }
        if let Some(v) = self.grid_size {
            c.grid_size = v;
        }
        if let Some(v) = self.sd_recalculate {
            c.sd_recalculate = v;
        }
        c.seed = self.seed.unwrap_or(0);
        c
    }
}

/// Grow a tree. `config_json` needs `method` (`"pd"`, `"ale"` or `"sd"`);
/// optional keys: `S`, `Z` (0-based), `max_depth`, `min_node_size`, `gamma`,
/// `grid_size`, `sd_recalculate`, `seed`.
///
/// # Safety
/// Pointers must be valid; `config_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gadget_tree_fit(
    d: *const GadgetDataset,
    m: *const GadgetModel,
    config_json: *const c_char,
    out: *mut *mut GadgetTree,
) -> GadgetStatus {
    guard(|| {
        let d = handle(d, "dataset")?;
        let m = handle(m, "model")?;
        let req: TreeRequest = serde_json::from_str(str_arg(config_json, "config_json")?)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let tree = fit_tree(&req.config(d.inner.n_features()), &d.inner, m.inner.as_ref())?;
        *out = Box::into_raw(Box::new(GadgetTree { inner: tree }));
        Ok(())
    })
}

/// # Safety
/// `t` must be a live tree handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gadget_tree_n_leaves(t: *const GadgetTree, out: *mut usize) -> GadgetStatus {
    guard(|| {
        let t = handle(t, "tree")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = t.inner.n_leaves();
        Ok(())
    })
}

/// Tree structure as JSON. `d` must be the dataset the tree was grown on.
///
/// # Safety
/// Handles must be live; `out` receives a string for `gadget_string_free`.
#[no_mangle]
pub unsafe extern "C" fn gadget_tree_json(t: *const GadgetTree, d: *const GadgetDataset, out: *mut *mut c_char) -> GadgetStatus {
    guard(|| {
        let t = handle(t, "tree")?;
        let d = handle(d, "dataset")?;
        write_string(out, t.inner.to_json(&d.inner).to_string())
    })
}

/// Interaction measures of the tree as JSON.
///
/// # Safety
/// `t` must be live; `out` receives a string for `gadget_string_free`.
#[no_mangle]
pub unsafe extern "C" fn gadget_tree_report_json(t: *const GadgetTree, out: *mut *mut c_char) -> GadgetStatus {
    guard(|| {
        let t = handle(t, "tree")?;
        write_string(out, InteractionReport::from_tree(&t.inner).to_json().to_string())
    })
}

/// Regional effect curves of every leaf as JSON.
///
/// # Safety
/// Handles must be live; `out` receives a string for `gadget_string_free`.
#[no_mangle]
pub unsafe extern "C" fn gadget_tree_curves_json(t: *const GadgetTree, d: *const GadgetDataset, out: *mut *mut c_char) -> GadgetStatus {
    guard(|| {
        let t = handle(t, "tree")?;
        let d = handle(d, "dataset")?;
        let leaves = regional_effects(&t.inner, &d.inner)?;
        write_string(out, serde_json::to_string(&leaves)?)
    })
}

/// # Safety
/// `t` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn gadget_tree_free(t: *mut GadgetTree) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PintRequest {
    method: Method,
    s: Option<usize>,
    alpha: Option<f64>,
    seed: Option<u64>,
}

/// Run the permutation interaction test and return the result as JSON.
/// `learner_json` as for `gadget_model_fit`; `config_json` needs `method`
/// and may set `s`, `alpha` and `seed`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gadget_pint_json(
    d: *const GadgetDataset,
    learner_json: *const c_char,
    config_json: *const c_char,
    out: *mut *mut c_char,
) -> GadgetStatus {
    guard(|| {
        let d = handle(d, "dataset")?;
        let spec: LearnerSpec = serde_json::from_str(str_arg(learner_json, "learner_json")?)?;
        let req: PintRequest = serde_json::from_str(str_arg(config_json, "config_json")?)?;
        let mut cfg = PintConfig::new(req.method);
        if let Some(s) = req.s {
            cfg.s = s;
        }
        if let Some(a) = req.alpha {
            cfg.alpha = a;
        }
        cfg.seed = req.seed.unwrap_or(0);
        let res = run_pint(&cfg, &spec, &d.inner)?;
        write_string(out, res.to_json().to_string())
    })
}
