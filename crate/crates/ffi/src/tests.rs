use super::*;
use maskid_core::dsp::Waveform;
use maskid_core::models::{Masker, MaskerConfig, Verifier, VerifierConfig};
use std::ffi::CString;
use std::path::PathBuf;
use std::ptr;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(maskid_last_error()) }
        .to_string_lossy()
        .into_owned()
}

/// A deterministic 1.5 s multi-tone test signal.
fn write_test_wav(path: &PathBuf, seed: u64) {
    let n = 24_000;
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / 16_000.0;
            let f = 150.0 + 17.0 * seed as f64;
            0.3 * (2.0 * std::f64::consts::PI * f * t).sin()
                + 0.1 * (2.0 * std::f64::consts::PI * 3.0 * f * t).sin()
        })
        .collect();
    dsp::write_wav(path, &Waveform::new(samples, 16_000).unwrap()).unwrap();
}

unsafe fn load(path: &PathBuf) -> *mut MaskidModel {
    let cpath = c(path.to_str().unwrap());
    let mut handle: *mut MaskidModel = ptr::null_mut();
    let status = maskid_model_load(cpath.as_ptr(), &mut handle);
    assert_eq!(status, MaskidStatus::MaskidStatusOk, "{}", last_error());
    assert!(!handle.is_null());
    handle
}

#[test]
fn load_kind_and_free_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let vpath = dir.path().join("verifier.ckpt");
    let mpath = dir.path().join("masker.ckpt");
    Verifier::build(VerifierConfig::toy(3, 1))
        .unwrap()
        .save(&vpath)
        .unwrap();
    Masker::build(MaskerConfig::toy(1))
        .unwrap()
        .save(&mpath)
        .unwrap();
    unsafe {
        let v = load(&vpath);
        let m = load(&mpath);
        let mut kind = MaskidModelKind::MaskidModelDae;
        assert_eq!(
            maskid_model_kind(v, &mut kind),
            MaskidStatus::MaskidStatusOk
        );
        assert_eq!(kind, MaskidModelKind::MaskidModelVerifier);
        assert_eq!(
            maskid_model_kind(m, &mut kind),
            MaskidStatus::MaskidStatusOk
        );
        assert_eq!(kind, MaskidModelKind::MaskidModelMasker);
        maskid_model_free(v);
        maskid_model_free(m);
        maskid_model_free(ptr::null_mut()); // explicit no-op
    }
}

#[test]
fn null_and_missing_inputs_set_errors() {
    unsafe {
        let mut handle: *mut MaskidModel = ptr::null_mut();
        assert_eq!(
            maskid_model_load(ptr::null(), &mut handle),
            MaskidStatus::MaskidStatusInvalidArgument
        );
        assert!(last_error().contains("null"));

        let missing = c("/definitely/not/a/checkpoint.ckpt");
        assert_eq!(
            maskid_model_load(missing.as_ptr(), &mut handle),
            MaskidStatus::MaskidStatusData
        );
        assert!(!last_error().is_empty());

        let mut kind = MaskidModelKind::MaskidModelDae;
        assert_eq!(
            maskid_model_kind(ptr::null_mut(), &mut kind),
            MaskidStatus::MaskidStatusInvalidArgument
        );
    }
}

#[test]
fn enhance_file_writes_same_length_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.wav");
    let output = dir.path().join("out.wav");
    write_test_wav(&input, 2);
    let mpath = dir.path().join("masker.ckpt");
    Masker::build(MaskerConfig::toy(7))
        .unwrap()
        .save(&mpath)
        .unwrap();
    unsafe {
        let m = load(&mpath);
        let cin = c(input.to_str().unwrap());
        let cout = c(output.to_str().unwrap());
        let status = maskid_enhance_file(m, cin.as_ptr(), cout.as_ptr());
        assert_eq!(status, MaskidStatus::MaskidStatusOk, "{}", last_error());
        maskid_model_free(m);
    }
    let orig = dsp::read_wav(&input).unwrap();
    let enhanced = dsp::read_wav(&output).unwrap();
    // Analysis drops the tail samples that don't fill a whole frame.
    assert!(enhanced.len() <= orig.len());
    assert!(orig.len() - enhanced.len() < 400);
    assert_eq!(enhanced.sample_rate, 16_000);
}

#[test]
fn enhance_rejects_a_verifier_handle() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.wav");
    write_test_wav(&input, 3);
    let vpath = dir.path().join("verifier.ckpt");
    Verifier::build(VerifierConfig::toy(2, 0))
        .unwrap()
        .save(&vpath)
        .unwrap();
    unsafe {
        let v = load(&vpath);
        let cin = c(input.to_str().unwrap());
        let cout = c(dir.path().join("out.wav").to_str().unwrap());
        assert_eq!(
            maskid_enhance_file(v, cin.as_ptr(), cout.as_ptr()),
            MaskidStatus::MaskidStatusInvalidArgument
        );
        maskid_model_free(v);
    }
}

#[test]
fn embed_and_score_pair_behave_like_cosine() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.wav");
    let b = dir.path().join("b.wav");
    write_test_wav(&a, 1);
    write_test_wav(&b, 9);
    let vpath = dir.path().join("verifier.ckpt");
    Verifier::build(VerifierConfig::toy(2, 4))
        .unwrap()
        .save(&vpath)
        .unwrap();
    unsafe {
        let v = load(&vpath);
        let ca = c(a.to_str().unwrap());
        let cb = c(b.to_str().unwrap());

        // Buffer-too-small still reports the true dimension.
        let mut tiny = [0.0f64; 1];
        let mut dim = 0usize;
        assert_eq!(
            maskid_embed_file(v, ca.as_ptr(), tiny.as_mut_ptr(), tiny.len(), &mut dim),
            MaskidStatus::MaskidStatusInvalidArgument
        );
        assert!(dim > 1);
        let mut dim_q = 0usize;
        assert_eq!(
            maskid_embedding_dim(v, &mut dim_q),
            MaskidStatus::MaskidStatusOk
        );
        assert_eq!(dim_q, dim);

        let mut ea = vec![0.0f64; dim];
        let mut eb = vec![0.0f64; dim];
        assert_eq!(
            maskid_embed_file(v, ca.as_ptr(), ea.as_mut_ptr(), ea.len(), &mut dim),
            MaskidStatus::MaskidStatusOk
        );
        assert_eq!(
            maskid_embed_file(v, cb.as_ptr(), eb.as_mut_ptr(), eb.len(), &mut dim),
            MaskidStatus::MaskidStatusOk
        );

        let mut score = f64::NAN;
        assert_eq!(
            maskid_score_pair(v, ca.as_ptr(), cb.as_ptr(), &mut score),
            MaskidStatus::MaskidStatusOk
        );
        let expected = eval::cosine(&ea, &eb).unwrap();
        assert_eq!(score, expected);
        assert!(score.abs() <= 1.0 + 1e-12);

        // Self-similarity is exactly 1 up to rounding.
        let mut self_score = 0.0;
        assert_eq!(
            maskid_score_pair(v, ca.as_ptr(), ca.as_ptr(), &mut self_score),
            MaskidStatus::MaskidStatusOk
        );
        assert!((self_score - 1.0).abs() < 1e-12);
        maskid_model_free(v);
    }
}

#[test]
fn version_is_a_static_string() {
    let v = unsafe { CStr::from_ptr(maskid_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_declares_the_full_surface() {
    let header = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("include")
            .join("maskid.h"),
    )
    .unwrap();
    for symbol in [
        "maskid_model_load",
        "maskid_model_free",
        "maskid_model_kind",
        "maskid_embedding_dim",
        "maskid_enhance_file",
        "maskid_embed_file",
        "maskid_score_pair",
        "maskid_last_error",
        "maskid_version",
        "MASKID_H",
    ] {
        assert!(header.contains(symbol), "header is missing {}", symbol);
    }
    // Handles stay opaque: no field list for the model struct.
    assert!(header.contains("typedef struct MaskidModel MaskidModel;"));
}
