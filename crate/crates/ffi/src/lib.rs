//! C ABI over the benchmark core.
//!
//! Scope: load a checkpoint and a dataset from disk, query shapes, run the
//! displacement metrics, fold adapters into the base weights, and predict
//! single samples. Training and data generation stay behind the CLI; this
//! surface exists so other languages can score checkpoints.
//!
//! Conventions:
//! - Every fallible function returns a [`MosaStatus`]; results come back
//!   through out-pointers that are written only on `Ok`.
//! - Handles are opaque. Free them with the matching `*_free`; passing null
//!   to a free is a no-op. Handles are not synchronized, so a single handle
//!   must not be used from two threads at once.
//! - On failure the calling thread's error message is replaced; read it with
//!   [`mosa_last_error_message`]. The pointer stays valid until the next
//!   failing call on the same thread.
//! - Paths and strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mosa_core::forecastnet::Forecaster;
use mosa_core::harness::{load_checkpoint, load_dataset, load_scenes};
use mosa_core::metrics::evaluate;
use mosa_core::synthworld::Dataset;
use mosa_core::{mosa, Error};

/// Outcome of an FFI call. Everything except `Ok` leaves a message behind
/// for [`mosa_last_error_message`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MosaStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Configuration problem (mirrors the CLI's exit code 2 class).
    Config = 3,
    /// File system failure.
    Io = 4,
    /// Unreadable or wrong-version checkpoint, dataset, or scenes file.
    Parse = 5,
    /// Argument outside the accepted range (bad k, wrong buffer length).
    InvalidArgument = 6,
    /// Lookup of a scene, parameter, or adapter target that does not exist.
    NotFound = 7,
    /// Numeric failure: shape mismatch, non-finite loss, unreachable goal.
    Numeric = 8,
    /// A panic crossed the boundary; the involved handles should be freed
    /// and not used again.
    Internal = 9,
}

/// Evaluation result, by value. Mirrors the core report field for field.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MosaEvalReport {
    pub n_samples: usize,
    pub k: usize,
    pub ade: f64,
    pub fde: f64,
    pub topk_ade: f64,
    pub topk_fde: f64,
}

/// Opaque forecaster handle.
pub struct MosaModel(Forecaster);

/// Opaque dataset handle (samples plus the scenes they reference).
pub struct MosaDataset(Dataset);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    // NUL bytes cannot appear in our error messages, but don't panic if one does.
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn status_of(err: &Error) -> MosaStatus {
    match err {
        Error::Config(_) => MosaStatus::Config,
        Error::Io { .. } => MosaStatus::Io,
        Error::Json { .. } | Error::Csv { .. } | Error::Version { .. } => MosaStatus::Parse,
        Error::InvalidArgument(_) => MosaStatus::InvalidArgument,
        Error::Unknown { .. } => MosaStatus::NotFound,
        Error::Shape { .. } | Error::NonFinite { .. } | Error::NoPath { .. } => MosaStatus::Numeric,
        Error::Cell { .. } => MosaStatus::Internal,
    }
}

fn fail(err: Error) -> MosaStatus {
    set_last_error(&err.to_string());
    status_of(&err)
}

fn fail_with(status: MosaStatus, msg: &str) -> MosaStatus {
    set_last_error(msg);
    status
}

/// Runs the body, converting a panic into `Internal` instead of letting it
/// unwind across the C boundary.
fn guarded(f: impl FnOnce() -> MosaStatus) -> MosaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail_with(MosaStatus::Internal, "panic inside the library"),
    }
}

/// Borrows a C string argument as UTF-8, reporting null and encoding errors.
///
/// # Safety
/// `ptr` must be null or point to a NUL-terminated string.
unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, MosaStatus> {
    if ptr.is_null() {
        return Err(fail_with(
            MosaStatus::NullPointer,
            &format!("{what} is null"),
        ));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        fail_with(
            MosaStatus::InvalidUtf8,
            &format!("{what} is not valid UTF-8"),
        )
    })
}

/// Borrows a handle argument, reporting null.
///
/// # Safety
/// `ptr` must be null or a live pointer previously returned by this library.
unsafe fn handle_arg<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, MosaStatus> {
    if ptr.is_null() {
        return Err(fail_with(
            MosaStatus::NullPointer,
            &format!("{what} is null"),
        ));
    }
    Ok(&*ptr)
}

/// Checks an out-pointer for null without reading through it.
fn out_arg<T>(ptr: *mut T, what: &str) -> Result<(), MosaStatus> {
    if ptr.is_null() {
        return Err(fail_with(
            MosaStatus::NullPointer,
            &format!("{what} is null"),
        ));
    }
    Ok(())
}

/// Library version as a static NUL-terminated string. Never null; do not free.
#[no_mangle]
pub extern "C" fn mosa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message from the calling thread's most recent failure, or an empty string
/// if nothing failed yet. Valid until the next failing call on this thread;
/// do not free.
#[no_mangle]
pub extern "C" fn mosa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Loads a checkpoint file into a new model handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_model` a valid pointer.
/// On `Ok` the caller owns the handle written to `*out_model` and must
/// release it with [`mosa_model_free`].
#[no_mangle]
pub unsafe extern "C" fn mosa_model_load(
    path: *const c_char,
    out_model: *mut *mut MosaModel,
) -> MosaStatus {
    guarded(|| {
        let path = match str_arg(path, "path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(status) = out_arg(out_model, "out_model") {
            return status;
        }
        match load_checkpoint(Path::new(path)) {
            Ok(model) => {
                *out_model = Box::into_raw(Box::new(MosaModel(model)));
                MosaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be null or a handle from this library that has not been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn mosa_model_free(model: *mut MosaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Reports the model's input/output shape. Each out-pointer may be null if
/// the caller does not want that field.
///
/// # Safety
/// `model` must be a live handle; non-null out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mosa_model_shape(
    model: *const MosaModel,
    out_t_obs: *mut usize,
    out_t_pred: *mut usize,
    out_k_modes: *mut usize,
    out_d_model: *mut usize,
) -> MosaStatus {
    guarded(|| {
        let model = match handle_arg(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        let cfg = &model.0.config;
        if !out_t_obs.is_null() {
            *out_t_obs = cfg.t_obs;
        }
        if !out_t_pred.is_null() {
            *out_t_pred = cfg.t_pred;
        }
        if !out_k_modes.is_null() {
            *out_k_modes = cfg.k_modes;
        }
        if !out_d_model.is_null() {
            *out_d_model = cfg.d_model;
        }
        MosaStatus::Ok
    })
}

/// Counts scalar parameters; with `trainable_only` set, only those currently
/// marked trainable.
///
/// # Safety
/// `model` must be a live handle and `out_count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mosa_model_param_count(
    model: *const MosaModel,
    trainable_only: bool,
    out_count: *mut usize,
) -> MosaStatus {
    guarded(|| {
        let model = match handle_arg(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        if let Err(status) = out_arg(out_count, "out_count") {
            return status;
        }
        let n = model
            .0
            .params()
            .iter()
            .filter(|(_, p)| !trainable_only || p.trainable)
            .map(|(_, p)| p.value.data().len())
            .sum();
        *out_count = n;
        MosaStatus::Ok
    })
}

/// Folds all attached adapters into their base weights and returns the
/// merged model as a new handle. The input handle is left untouched.
///
/// # Safety
/// `model` must be a live handle and `out_model` a valid pointer. On `Ok`
/// the caller owns the new handle.
#[no_mangle]
pub unsafe extern "C" fn mosa_model_merge(
    model: *const MosaModel,
    out_model: *mut *mut MosaModel,
) -> MosaStatus {
    guarded(|| {
        let model = match handle_arg(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        if let Err(status) = out_arg(out_model, "out_model") {
            return status;
        }
        match mosa::merge(&model.0) {
            Ok(merged) => {
                *out_model = Box::into_raw(Box::new(MosaModel(merged)));
                MosaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Loads a dataset file and the scenes file it references.
///
/// # Safety
/// Both paths must be NUL-terminated strings and `out_dataset` a valid
/// pointer. On `Ok` the caller owns the handle and must release it with
/// [`mosa_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn mosa_dataset_load(
    data_path: *const c_char,
    scenes_path: *const c_char,
    out_dataset: *mut *mut MosaDataset,
) -> MosaStatus {
    guarded(|| {
        let data_path = match str_arg(data_path, "data_path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let scenes_path = match str_arg(scenes_path, "scenes_path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(status) = out_arg(out_dataset, "out_dataset") {
            return status;
        }
        let scenes = match load_scenes(Path::new(scenes_path)) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        match load_dataset(Path::new(data_path), &scenes) {
            Ok(dataset) => {
                *out_dataset = Box::into_raw(Box::new(MosaDataset(dataset)));
                MosaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a dataset handle. Null is a no-op.
///
/// # Safety
/// `dataset` must be null or a handle from this library that has not been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn mosa_dataset_free(dataset: *mut MosaDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Reports the number of samples in the dataset.
///
/// # Safety
/// `dataset` must be a live handle and `out_len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mosa_dataset_len(
    dataset: *const MosaDataset,
    out_len: *mut usize,
) -> MosaStatus {
    guarded(|| {
        let dataset = match handle_arg(dataset, "dataset") {
            Ok(d) => d,
            Err(status) => return status,
        };
        if let Err(status) = out_arg(out_len, "out_len") {
            return status;
        }
        *out_len = dataset.0.len();
        MosaStatus::Ok
    })
}

/// Runs the displacement metrics of the model over the dataset. `k` is the
/// number of hypotheses scored by the Top-K metrics; pass 0 to use the
/// model's full mode count.
///
/// # Safety
/// Both handles must be live and `out_report` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mosa_evaluate(
    model: *const MosaModel,
    dataset: *const MosaDataset,
    k: usize,
    out_report: *mut MosaEvalReport,
) -> MosaStatus {
    guarded(|| {
        let model = match handle_arg(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        let dataset = match handle_arg(dataset, "dataset") {
            Ok(d) => d,
            Err(status) => return status,
        };
        if let Err(status) = out_arg(out_report, "out_report") {
            return status;
        }
        let k = if k == 0 { model.0.config.k_modes } else { k };
        match evaluate(&model.0, &dataset.0, k) {
            Ok(r) => {
                *out_report = MosaEvalReport {
                    n_samples: r.n_samples,
                    k: r.k,
                    ade: r.ade,
                    fde: r.fde,
                    topk_ade: r.topk_ade,
                    topk_fde: r.topk_fde,
                };
                MosaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Predicts one dataset sample. Writes `k_modes * t_pred * 2` doubles into
/// `out_xy`, mode-major: hypothesis 0 step 0 x, y, then step 1, and so on.
/// `out_len` must be exactly that product.
///
/// # Safety
/// Both handles must be live and `out_xy` must point to `out_len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn mosa_predict(
    model: *const MosaModel,
    dataset: *const MosaDataset,
    sample_index: usize,
    out_xy: *mut f64,
    out_len: usize,
) -> MosaStatus {
    guarded(|| {
        let model = match handle_arg(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        let dataset = match handle_arg(dataset, "dataset") {
            Ok(d) => d,
            Err(status) => return status,
        };
        if let Err(status) = out_arg(out_xy, "out_xy") {
            return status;
        }
        let cfg = &model.0.config;
        let want = cfg.k_modes * cfg.t_pred * 2;
        if out_len != want {
            return fail_with(
                MosaStatus::InvalidArgument,
                &format!("out_len is {out_len}, the model produces {want} doubles"),
            );
        }
        let Some(sample) = dataset.0.samples.get(sample_index) else {
            return fail_with(
                MosaStatus::InvalidArgument,
                &format!(
                    "sample_index {sample_index} out of range for {} samples",
                    dataset.0.len()
                ),
            );
        };
        let grid = match dataset.0.scene(&sample.scene_id) {
            Ok(g) => g,
            Err(e) => return fail(e),
        };
        let modes = match model.0.predict(grid, &sample.past) {
            Ok(m) => m,
            Err(e) => return fail(e),
        };
        let out = std::slice::from_raw_parts_mut(out_xy, out_len);
        for (m, mode) in modes.iter().enumerate() {
            for (t, p) in mode.iter().enumerate() {
                out[(m * cfg.t_pred + t) * 2] = p.x;
                out[(m * cfg.t_pred + t) * 2 + 1] = p.y;
            }
        }
        MosaStatus::Ok
    })
}
