//! C ABI over the maskid models: load checkpoints, enhance wav files, embed
//! utterances, and score verification pairs.
//!
//! Conventions:
//! - Every fallible call returns a `MaskidStatus`; `MASKID_STATUS_OK` is 0.
//! - On failure, `maskid_last_error` returns a message for the calling
//!   thread, valid until the next failing call on that thread.
//! - Handles are opaque; free them with `maskid_model_free`. A null handle
//!   is rejected, never dereferenced.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use maskid_core::dsp::{self, StftConfig};
use maskid_core::error::Error;
use maskid_core::eval;
use maskid_core::models::{enhance_to_waveform, load_model, Model, FEATURE_COMPRESSION};

/// Result codes; nonzero values mirror the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskidStatus {
    /// Success.
    MaskidStatusOk = 0,
    /// Bad arguments: null pointers, invalid UTF-8, wrong model kind.
    MaskidStatusInvalidArgument = 2,
    /// Unreadable or malformed files and checkpoints.
    MaskidStatusData = 3,
    /// Non-finite values or numeric failure inside the models.
    MaskidStatusNumeric = 4,
    /// A panic crossed the boundary; state may be inconsistent.
    MaskidStatusPanic = 5,
}

/// Model kinds reported by `maskid_model_kind`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskidModelKind {
    MaskidModelVerifier = 0,
    MaskidModelMasker = 1,
    MaskidModelDae = 2,
}

/// Opaque model handle.
pub struct MaskidModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap());
}

fn status_of(err: &Error) -> MaskidStatus {
    match err.exit_code() {
        2 => MaskidStatus::MaskidStatusInvalidArgument,
        4 => MaskidStatus::MaskidStatusNumeric,
        _ => MaskidStatus::MaskidStatusData,
    }
}

fn fail(err: Error) -> MaskidStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn guarded(f: impl FnOnce() -> MaskidStatus) -> MaskidStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            MaskidStatus::MaskidStatusPanic
        }
    }
}

/// # Safety: `ptr` must be null or a NUL-terminated string.
unsafe fn path_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a Path, MaskidStatus> {
    if ptr.is_null() {
        set_error(&format!("{} is null", name));
        return Err(MaskidStatus::MaskidStatusInvalidArgument);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error(&format!("{} is not valid UTF-8", name));
            Err(MaskidStatus::MaskidStatusInvalidArgument)
        }
    }
}

unsafe fn model_arg<'a>(
    handle: *mut MaskidModel,
    name: &str,
) -> Result<&'a mut MaskidModel, MaskidStatus> {
    if handle.is_null() {
        set_error(&format!("{} is null", name));
        return Err(MaskidStatus::MaskidStatusInvalidArgument);
    }
    Ok(&mut *handle)
}

/// Message for the most recent failure on this thread. Never null; the
/// pointer is invalidated by the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn maskid_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn maskid_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Load any checkpoint. On success, `*out` owns the model.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn maskid_model_load(
    path: *const c_char,
    out: *mut *mut MaskidModel,
) -> MaskidStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out is null");
            return MaskidStatus::MaskidStatusInvalidArgument;
        }
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_model(path) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MaskidModel { inner }));
                MaskidStatus::MaskidStatusOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `handle` must come from `maskid_model_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn maskid_model_free(handle: *mut MaskidModel) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Report what kind of model a handle holds.
///
/// # Safety
/// `handle` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn maskid_model_kind(
    handle: *mut MaskidModel,
    out: *mut MaskidModelKind,
) -> MaskidStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out is null");
            return MaskidStatus::MaskidStatusInvalidArgument;
        }
        let model = match model_arg(handle, "handle") {
            Ok(m) => m,
            Err(s) => return s,
        };
        *out = match model.inner {
            Model::Verifier(_) => MaskidModelKind::MaskidModelVerifier,
            Model::Masker(_) => MaskidModelKind::MaskidModelMasker,
            Model::Dae(_) => MaskidModelKind::MaskidModelDae,
        };
        MaskidStatus::MaskidStatusOk
    })
}

/// Embedding dimensionality of a verifier handle.
///
/// # Safety
/// `handle` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn maskid_embedding_dim(
    handle: *mut MaskidModel,
    out: *mut usize,
) -> MaskidStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out is null");
            return MaskidStatus::MaskidStatusInvalidArgument;
        }
        let model = match model_arg(handle, "handle") {
            Ok(m) => m,
            Err(s) => return s,
        };
        match &model.inner {
            Model::Verifier(v) => {
                *out = v.cfg.embedding_dim;
                MaskidStatus::MaskidStatusOk
            }
            _ => {
                set_error("handle is not a verifier");
                MaskidStatus::MaskidStatusInvalidArgument
            }
        }
    })
}

fn enhance_file(model: &mut Model, input: &Path, output: &Path) -> Result<(), Error> {
    let wave = dsp::read_wav(input)?;
    if wave.sample_rate != 16_000 {
        return Err(Error::Data(format!(
            "{}: expected 16 kHz input, got {} Hz",
            input.display(),
            wave.sample_rate
        )));
    }
    let stft = StftConfig::default();
    let spec = dsp::stft(&wave, &stft)?;
    let compressed = dsp::compress(
        &dsp::Spectrogram {
            values: spec.magnitude.clone(),
            compression_exponent: 1.0,
        },
        FEATURE_COMPRESSION,
    )?;
    let enhanced = match model {
        Model::Masker(m) => m.apply_mask(&compressed)?.1,
        Model::Dae(d) => d.enhance(&compressed)?,
        Model::Verifier(_) => {
            return Err(Error::InvalidArgument(
                "enhancement needs a mask or autoencoder checkpoint".into(),
            ))
        }
    };
    let out_wave = enhance_to_waveform(&enhanced, &spec, &stft)?;
    dsp::write_wav(output, &out_wave)
}

/// Enhance a 16 kHz mono wav file and write the result.
///
/// # Safety
/// All pointers must be valid; paths are NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn maskid_enhance_file(
    handle: *mut MaskidModel,
    input_path: *const c_char,
    output_path: *const c_char,
) -> MaskidStatus {
    guarded(|| {
        let model = match model_arg(handle, "handle") {
            Ok(m) => m,
            Err(s) => return s,
        };
        let input = match path_arg(input_path, "input_path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let output = match path_arg(output_path, "output_path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match enhance_file(&mut model.inner, input, output) {
            Ok(()) => MaskidStatus::MaskidStatusOk,
            Err(e) => fail(e),
        }
    })
}

/// Embed a wav file with a verifier handle. `buf` receives up to `buf_len`
/// values; `*out_dim` is set to the embedding dimension. Fails with
/// invalid-argument when the buffer is too small.
///
/// # Safety
/// `buf` must point to at least `buf_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn maskid_embed_file(
    handle: *mut MaskidModel,
    wav_path: *const c_char,
    buf: *mut f64,
    buf_len: usize,
    out_dim: *mut usize,
) -> MaskidStatus {
    guarded(|| {
        let model = match model_arg(handle, "handle") {
            Ok(m) => m,
            Err(s) => return s,
        };
        let path = match path_arg(wav_path, "wav_path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        if buf.is_null() || out_dim.is_null() {
            set_error("buf or out_dim is null");
            return MaskidStatus::MaskidStatusInvalidArgument;
        }
        let verifier = match &mut model.inner {
            Model::Verifier(v) => v,
            _ => {
                set_error("handle is not a verifier");
                return MaskidStatus::MaskidStatusInvalidArgument;
            }
        };
        let features = match eval::utterance_features(path, &StftConfig::default()) {
            Ok(f) => f,
            Err(e) => return fail(e),
        };
        let embedding = match verifier.embed(&features) {
            Ok(e) => e,
            Err(e) => return fail(e),
        };
        *out_dim = embedding.len();
        if buf_len < embedding.len() {
            set_error(&format!(
                "buffer holds {} values, embedding needs {}",
                buf_len,
                embedding.len()
            ));
            return MaskidStatus::MaskidStatusInvalidArgument;
        }
        std::ptr::copy_nonoverlapping(embedding.as_ptr(), buf, embedding.len());
        MaskidStatus::MaskidStatusOk
    })
}

/// Cosine score between two wav files under a verifier handle.
///
/// # Safety
/// All pointers must be valid; paths are NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn maskid_score_pair(
    handle: *mut MaskidModel,
    wav_a: *const c_char,
    wav_b: *const c_char,
    out_score: *mut f64,
) -> MaskidStatus {
    guarded(|| {
        let model = match model_arg(handle, "handle") {
            Ok(m) => m,
            Err(s) => return s,
        };
        let a = match path_arg(wav_a, "wav_a") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let b = match path_arg(wav_b, "wav_b") {
            Ok(p) => p,
            Err(s) => return s,
        };
        if out_score.is_null() {
            set_error("out_score is null");
            return MaskidStatus::MaskidStatusInvalidArgument;
        }
        let verifier = match &mut model.inner {
            Model::Verifier(v) => v,
            _ => {
                set_error("handle is not a verifier");
                return MaskidStatus::MaskidStatusInvalidArgument;
            }
        };
        let stft = StftConfig::default();
        let embed = |v: &mut maskid_core::models::Verifier, p: &Path| -> Result<Vec<f64>, Error> {
            let features = eval::utterance_features(p, &stft)?;
            v.embed(&features)
        };
        let ea = match embed(verifier, a) {
            Ok(e) => e,
            Err(e) => return fail(e),
        };
        let eb = match embed(verifier, b) {
            Ok(e) => e,
            Err(e) => return fail(e),
        };
        match eval::cosine(&ea, &eb) {
            Ok(s) => {
                *out_score = s;
                MaskidStatus::MaskidStatusOk
            }
            Err(e) => fail(e),
        }
    })
}

#[cfg(test)]
mod tests;
