//! C interface to the report generator.
//!
//! Every function returns an [`MdlmStatus`]; on failure the message is
//! available from [`mdlm_last_error`] on the same thread. Strings handed out
//! by the library must be released with [`mdlm_string_free`], models with
//! [`mdlm_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mdlm_core::anchor::{AnchorLevel, HierarchyConfig, TokenAnnotation};
use mdlm_core::config::RunConfig;
use mdlm_core::corpus::{extract_findings, FindingVector, Vocab};
use mdlm_core::denoiser::{init_params, load_checkpoint, DenoiserCheckpoint};
use mdlm_core::inference::{decode, trigger_steps, InferenceConfig};
use mdlm_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdlmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Parse = 4,
    Alignment = 5,
    Contract = 6,
    Numerical = 7,
    Checkpoint = 8,
    Io = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Trained (or freshly initialized) model with its vocabulary and decoding
/// settings.
pub struct MdlmModel {
    checkpoint: DenoiserCheckpoint,
    vocab: Vocab,
    inference: InferenceConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MdlmStatus {
    match e {
        Error::Config(_) => MdlmStatus::Config,
        Error::Parse { .. } | Error::Json(_) => MdlmStatus::Parse,
        Error::Alignment(_) => MdlmStatus::Alignment,
        Error::Contract(_) => MdlmStatus::Contract,
        Error::Numerical(_) => MdlmStatus::Numerical,
        Error::Checkpoint(_) => MdlmStatus::Checkpoint,
        Error::Io { .. } => MdlmStatus::Io,
    }
}

struct Failure(MdlmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MdlmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MdlmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MdlmStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(MdlmStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MdlmStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn check_out<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(MdlmStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Message describing the last failure on this thread; empty after success.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn mdlm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mdlm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint. `run_config_json` may be null for defaults; it
/// supplies the vocabulary and decoding settings.
///
/// # Safety
/// `path` and a non-null `run_config_json` must be NUL-terminated strings;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mdlm_model_load(
    path: *const c_char,
    run_config_json: *const c_char,
    out: *mut *mut MdlmModel,
) -> MdlmStatus {
    guard(|| {
        check_out(out, "out")?;
        let path = text(path, "path")?;
        let config = run_config(run_config_json)?;
        let checkpoint = load_checkpoint(Path::new(path))?;
        *out = Box::into_raw(Box::new(model_from(checkpoint, &config)?));
        Ok(())
    })
}

/// Creates an untrained model from a run configuration (null for defaults).
///
/// # Safety
/// A non-null `run_config_json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mdlm_model_init(run_config_json: *const c_char, out: *mut *mut MdlmModel) -> MdlmStatus {
    guard(|| {
        check_out(out, "out")?;
        let config = run_config(run_config_json)?;
        let checkpoint = init_params(&config.denoiser, config.denoiser.seed)?;
        *out = Box::into_raw(Box::new(model_from(checkpoint, &config)?));
        Ok(())
    })
}

unsafe fn run_config(json: *const c_char) -> Result<RunConfig, Failure> {
    let config = if json.is_null() { RunConfig::default() } else { RunConfig::from_json(text(json, "run_config_json")?)? };
    Ok(config.resolve()?)
}

fn model_from(checkpoint: DenoiserCheckpoint, config: &RunConfig) -> Result<MdlmModel, Failure> {
    Ok(MdlmModel { checkpoint, vocab: config.corpus.vocab()?, inference: config.inference })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mdlm_model_free(model: *mut MdlmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of scalar parameters.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mdlm_model_param_count(model: *const MdlmModel, out: *mut usize) -> MdlmStatus {
    guard(|| {
        check_out(out, "out")?;
        let m = model.as_ref().ok_or(Failure(MdlmStatus::NullPointer, "model is null".into()))?;
        *out = m.checkpoint.model.param_count();
        Ok(())
    })
}

/// Generates a report for a condition given as JSON (the dataset's
/// `condition` object). The text is written to `out_text`; pass counts to
/// the optional `out_forward_passes` and `out_revisions`.
///
/// # Safety
/// `model` must be live, `condition_json` NUL-terminated, `out_text`
/// writable; the two counters may be null.
#[no_mangle]
pub unsafe extern "C" fn mdlm_decode(
    model: *const MdlmModel,
    condition_json: *const c_char,
    out_text: *mut *mut c_char,
    out_forward_passes: *mut usize,
    out_revisions: *mut usize,
) -> MdlmStatus {
    guard(|| {
        check_out(out_text, "out_text")?;
        let m = model.as_ref().ok_or(Failure(MdlmStatus::NullPointer, "model is null".into()))?;
        let condition: FindingVector = serde_json::from_str(text(condition_json, "condition_json")?)
            .map_err(|e| Failure(MdlmStatus::Parse, format!("condition: {e}")))?;
        let out = decode(&m.checkpoint.model, &m.vocab, &condition, &m.inference)?;
        if !out_forward_passes.is_null() {
            *out_forward_passes = out.state.forward_passes;
        }
        if !out_revisions.is_null() {
            *out_revisions = out.state.revisions.len();
        }
        *out_text = into_c_string(out.tokens.join(" "));
        Ok(())
    })
}

/// Rewriting trigger steps for a schedule. Writes at most `capacity`
/// entries to `buffer` and the full count to `out_len`; returns
/// `BUFFER_TOO_SMALL` when the buffer cannot hold them all.
///
/// # Safety
/// `buffer` must hold `capacity` elements (may be null when 0); `out_len`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn mdlm_trigger_steps(
    steps: usize,
    period: usize,
    window_lo: f64,
    window_hi: f64,
    buffer: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> MdlmStatus {
    guard(|| {
        check_out(out_len, "out_len")?;
        let cfg = InferenceConfig { steps, trigger_period: period, window: [window_lo, window_hi], ..InferenceConfig::default() };
        cfg.validate()?;
        let t = trigger_steps(&cfg);
        *out_len = t.len();
        if t.len() > capacity {
            return Err(Failure(MdlmStatus::BufferTooSmall, format!("need {} slots, have {capacity}", t.len())));
        }
        if !t.is_empty() {
            check_out(buffer, "buffer")?;
            ptr::copy_nonoverlapping(t.as_ptr(), buffer, t.len());
        }
        Ok(())
    })
}

/// Masking exponent and loss weight for an anchor level (-1 non-anchor,
/// 0 anatomy, 1 finding, 2 modifier).
///
/// # Safety
/// `out_phi` and `out_weight` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mdlm_token_annotation(
    level: i32,
    beta: f64,
    gamma: f64,
    lambda: f64,
    out_phi: *mut f64,
    out_weight: *mut f64,
) -> MdlmStatus {
    guard(|| {
        check_out(out_phi, "out_phi")?;
        check_out(out_weight, "out_weight")?;
        let cfg = HierarchyConfig { beta, gamma, lambda };
        cfg.validate()?;
        let level = AnchorLevel::from_value(level)
            .ok_or_else(|| Failure(MdlmStatus::Contract, format!("unknown anchor level {level}")))?;
        let a = TokenAnnotation::new(level, &cfg);
        *out_phi = a.phi;
        *out_weight = a.weight;
        Ok(())
    })
}

/// Extracts slot findings from report text, returned as condition JSON.
///
/// # Safety
/// `report` must be NUL-terminated and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn mdlm_extract_findings(report: *const c_char, out_json: *mut *mut c_char) -> MdlmStatus {
    guard(|| {
        check_out(out_json, "out_json")?;
        let tokens: Vec<&str> = text(report, "report")?.split_whitespace().collect();
        let json = serde_json::to_string(&extract_findings(&tokens)).map_err(Error::from)?;
        *out_json = into_c_string(json);
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mdlm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
