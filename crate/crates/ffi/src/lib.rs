//! C ABI over the `jointspeech` engine.
//!
//! Every fallible function returns a [`JsStatus`]; on failure the message is
//! available from [`js_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use jointspeech::cli::{self, ExperimentConfig};
use jointspeech::eval::edit_distance;
use jointspeech::features::{load_corpus, save_corpus, synth_corpus, Corpus, CorpusConfig};
use jointspeech::losses::{ctc_loss, lambda_adapt, mse_loss};
use jointspeech::net::{load_checkpoint, save_checkpoint, Checkpoint};
use jointspeech::training::{evaluate, ModelContext};
use jointspeech::{Error, Matrix, PhoneSequence};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidInput = 2,
    InvalidConfig = 3,
    Format = 4,
    Io = 5,
    Numeric = 6,
    InfeasibleAlignment = 7,
    Internal = 8,
    Panic = 9,
}

impl From<&Error> for JsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => JsStatus::InvalidInput,
            Error::InvalidConfig(_) => JsStatus::InvalidConfig,
            Error::Format { .. } | Error::Json(_) => JsStatus::Format,
            Error::Numeric(_) => JsStatus::Numeric,
            Error::InfeasibleAlignment { .. } => JsStatus::InfeasibleAlignment,
            Error::Io { .. } => JsStatus::Io,
            Error::Internal(_) => JsStatus::Internal,
        }
    }
}

/// A loaded or generated corpus.
pub struct JsCorpus(Corpus);

/// A trained model with its normalisation statistics.
pub struct JsModel {
    checkpoint: Checkpoint,
    ctx: ModelContext,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct JsEvalResult {
    pub enh_loss: f64,
    pub asr_loss: f64,
    /// Percent.
    pub per: f64,
    pub skipped: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct JsEditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Engine(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

type FfiResult<T> = std::result::Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> JsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => JsStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            JsStatus::NullArgument
        }
        Ok(Err(Failure::Engine(e))) => {
            set_error(e.to_string());
            JsStatus::from(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            JsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Engine(Error::InvalidInput(format!("{what} is not UTF-8"))))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &'static str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes removed")
        .into_raw()
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn js_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn js_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn js_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generates a synthetic corpus from a JSON corpus config.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn js_corpus_generate(
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut JsCorpus,
) -> JsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(config_json, "config_json")?;
        let cfg: CorpusConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("corpus config: {e}")))?;
        let corpus = synth_corpus(&cfg, seed)?;
        *out = Box::into_raw(Box::new(JsCorpus(corpus)));
        Ok(())
    })
}

/// # Safety
/// `dir` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn js_corpus_load(dir: *const c_char, out: *mut *mut JsCorpus) -> JsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let corpus = load_corpus(&PathBuf::from(str_arg(dir, "dir")?))?;
        *out = Box::into_raw(Box::new(JsCorpus(corpus)));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be a live handle; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn js_corpus_save(corpus: *const JsCorpus, dir: *const c_char) -> JsStatus {
    guard(|| {
        let corpus = ref_arg(corpus, "corpus")?;
        save_corpus(&corpus.0, &PathBuf::from(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// Number of utterances, or 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn js_corpus_len(corpus: *const JsCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `corpus` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn js_corpus_free(corpus: *mut JsCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Loads a checkpoint given its path stem.
///
/// # Safety
/// `stem` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn js_model_load(stem: *const c_char, out: *mut *mut JsModel) -> JsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let checkpoint = load_checkpoint(&PathBuf::from(str_arg(stem, "stem")?))?;
        let ctx = ModelContext::new(checkpoint.config.clone(), checkpoint.std_vector.clone())?;
        *out = Box::into_raw(Box::new(JsModel { checkpoint, ctx }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `stem` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn js_model_save(model: *const JsModel, stem: *const c_char) -> JsStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        save_checkpoint(&PathBuf::from(str_arg(stem, "stem")?), &model.checkpoint)?;
        Ok(())
    })
}

/// Number of trainable scalars, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn js_model_num_parameters(model: *const JsModel) -> usize {
    model.as_ref().map_or(0, |m| m.checkpoint.store.num_parameters())
}

/// Mean losses and greedy-decoding PER of `model` on `corpus`.
///
/// # Safety
/// `model` and `corpus` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn js_model_evaluate(
    model: *const JsModel,
    corpus: *const JsCorpus,
    out: *mut JsEvalResult,
) -> JsStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let corpus = ref_arg(corpus, "corpus")?;
        let out = out_arg(out, "out")?;
        if corpus.0.classes() != model.checkpoint.config.classes {
            return Err(Error::InvalidInput(format!(
                "corpus has {} classes, model {}",
                corpus.0.classes(),
                model.checkpoint.config.classes
            ))
            .into());
        }
        let stats = evaluate(&model.ctx, &model.checkpoint.store, &corpus.0.utterances)?;
        *out = JsEvalResult {
            enh_loss: stats.enh,
            asr_loss: stats.asr,
            per: stats.per,
            skipped: stats.skipped,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn js_model_free(model: *mut JsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs a full training experiment from a JSON experiment config. On
/// success `report_json` receives a summary to release with
/// [`js_string_free`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `report_json` writable.
#[no_mangle]
pub unsafe extern "C" fn js_train(config_json: *const c_char, report_json: *mut *mut c_char) -> JsStatus {
    guard(|| {
        let report_json = out_arg(report_json, "report_json")?;
        let cfg = ExperimentConfig::from_json(str_arg(config_json, "config_json")?)?;
        let outcome = cli::train(&cfg)?;
        let last = outcome.history.records.last();
        let report = serde_json::json!({
            "epochs": outcome.history.len(),
            "updates": outcome.history.updates,
            "skipped": outcome.history.skipped,
            "final_valid_per": last.map(|r| r.valid_per),
            "final_valid_enh": last.map(|r| r.valid_enh),
            "final_valid_asr": last.map(|r| r.valid_asr),
            "checkpoint": outcome.checkpoint,
            "history_csv": outcome.history_csv,
        });
        *report_json = to_c_string(report.to_string());
        Ok(())
    })
}

/// CTC loss of row-major `frames × classes` logits; the blank is the last
/// class. `grad` may be null, otherwise it receives `frames × classes`
/// values.
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn js_ctc_loss(
    logits: *const f64,
    frames: usize,
    classes: usize,
    labels: *const usize,
    label_len: usize,
    loss: *mut f64,
    grad: *mut f64,
) -> JsStatus {
    guard(|| {
        let loss = out_arg(loss, "loss")?;
        let n = frames
            .checked_mul(classes)
            .ok_or_else(|| Error::InvalidInput("logits size overflows".into()))?;
        let data = slice_arg(logits, n, "logits")?;
        let labels = slice_arg(labels, label_len, "labels")?;
        let m = Matrix::from_vec(frames, classes, data.to_vec())?;
        let v = ctc_loss(&m, &PhoneSequence::new(labels.to_vec()))?;
        *loss = v.value;
        if !grad.is_null() {
            std::slice::from_raw_parts_mut(grad, n).copy_from_slice(v.grad.as_slice());
        }
        Ok(())
    })
}

/// Adaptive weight `10^⌊log10 l_asr⌋ / 10^⌊log10 l_enh⌋`.
#[no_mangle]
pub extern "C" fn js_lambda_adapt(l_asr: f64, l_enh: f64) -> f64 {
    lambda_adapt(l_asr, l_enh)
}

/// Mean squared error between two buffers of `len` values.
///
/// # Safety
/// Both buffers must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn js_mse(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> JsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let a = Matrix::from_vec(1, len, slice_arg(a, len, "a")?.to_vec())?;
        let b = Matrix::from_vec(1, len, slice_arg(b, len, "b")?.to_vec())?;
        *out = mse_loss(&a, &b)?.value;
        Ok(())
    })
}

/// Minimum edit counts turning `reference` into `hypothesis`.
///
/// # Safety
/// Buffers must hold the stated number of elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn js_edit_distance(
    reference: *const u32,
    reference_len: usize,
    hypothesis: *const u32,
    hypothesis_len: usize,
    out: *mut JsEditCounts,
) -> JsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = slice_arg(reference, reference_len, "reference")?;
        let h = slice_arg(hypothesis, hypothesis_len, "hypothesis")?;
        let c = edit_distance(r, h);
        *out = JsEditCounts {
            substitutions: c.substitutions,
            insertions: c.insertions,
            deletions: c.deletions,
        };
        Ok(())
    })
}
