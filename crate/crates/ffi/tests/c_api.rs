use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use jointspeech_ffi::*;

fn last_error() -> String {
    let p = js_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

const CORPUS: &str = r#"{"utterances": 4, "frames_min": 10, "frames_max": 12, "bins": 8,
    "visual_dim": 2, "phones": 4, "phones_min": 2, "phones_max": 3}"#;

#[test]
fn ctc_loss_two_frame_example() {
    // uniform two-class logits, label [0] over two frames: paths "0b", "b0", "00"
    let logits = [0.0; 4];
    let labels = [0usize];
    let mut loss = 0.0;
    let mut grad = [0.0; 4];
    let s = unsafe { js_ctc_loss(logits.as_ptr(), 2, 2, labels.as_ptr(), 1, &mut loss, grad.as_mut_ptr()) };
    assert_eq!(s, JsStatus::Ok);
    assert!((loss - (-(0.75f64).ln())).abs() < 1e-12);
    for row in grad.chunks(2) {
        assert!((row[0] + row[1]).abs() < 1e-12);
    }
    let s = unsafe { js_ctc_loss(logits.as_ptr(), 2, 2, labels.as_ptr(), 1, &mut loss, ptr::null_mut()) };
    assert_eq!(s, JsStatus::Ok);
}

#[test]
fn errors_map_to_status_codes() {
    let logits = [0.0; 4];
    let labels = [0usize, 0];
    let mut loss = 0.0;
    let s = unsafe { js_ctc_loss(logits.as_ptr(), 2, 2, labels.as_ptr(), 2, &mut loss, ptr::null_mut()) };
    assert_eq!(s, JsStatus::InfeasibleAlignment);
    assert!(last_error().contains('3'), "{}", last_error());

    let s = unsafe { js_ctc_loss(ptr::null(), 2, 2, labels.as_ptr(), 1, &mut loss, ptr::null_mut()) };
    assert_eq!(s, JsStatus::NullArgument);
    assert!(last_error().contains("logits"));

    let a = [1.0, 2.0];
    let mut out = 0.0;
    assert_eq!(
        unsafe { js_mse(a.as_ptr(), a.as_ptr(), 2, ptr::null_mut()) },
        JsStatus::NullArgument
    );
    assert_eq!(
        unsafe { js_mse(a.as_ptr(), a.as_ptr(), 0, &mut out) },
        JsStatus::InvalidInput
    );

    let mut corpus = ptr::null_mut();
    let bad = cstr(r#"{"utterances": 4}"#);
    assert_eq!(
        unsafe { js_corpus_generate(bad.as_ptr(), 1, &mut corpus) },
        JsStatus::InvalidConfig
    );
    assert!(corpus.is_null());
    let missing = cstr("/nonexistent/jointspeech-corpus");
    assert_eq!(unsafe { js_corpus_load(missing.as_ptr(), &mut corpus) }, JsStatus::Io);
}

#[test]
fn pure_functions() {
    assert_eq!(js_lambda_adapt(50.0, 0.003), 1e4);
    assert_eq!(js_lambda_adapt(0.9999, 1.0001), 0.1);

    let (a, b) = ([1.0, 2.0, 3.0], [2.0, 2.0, 5.0]);
    let mut out = 0.0;
    assert_eq!(unsafe { js_mse(a.as_ptr(), b.as_ptr(), 3, &mut out) }, JsStatus::Ok);
    assert!((out - 5.0 / 3.0).abs() < 1e-15);

    let (r, h) = ([1u32, 2, 3], [1u32, 3, 4, 5]);
    let mut c = JsEditCounts::default();
    assert_eq!(
        unsafe { js_edit_distance(r.as_ptr(), 3, h.as_ptr(), 4, &mut c) },
        JsStatus::Ok
    );
    assert_eq!(c.substitutions + c.insertions + c.deletions, 3);
    assert_eq!(
        unsafe { js_edit_distance(ptr::null(), 0, ptr::null(), 0, &mut c) },
        JsStatus::Ok
    );
    assert_eq!(c, JsEditCounts::default());

    let v = unsafe { CStr::from_ptr(js_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn corpus_handle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = cstr(CORPUS);
    let mut corpus = ptr::null_mut();
    assert_eq!(
        unsafe { js_corpus_generate(cfg.as_ptr(), 3, &mut corpus) },
        JsStatus::Ok
    );
    assert_eq!(unsafe { js_corpus_len(corpus) }, 4);
    let path = cstr(dir.path().join("c").to_str().unwrap());
    assert_eq!(unsafe { js_corpus_save(corpus, path.as_ptr()) }, JsStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { js_corpus_load(path.as_ptr(), &mut back) }, JsStatus::Ok);
    assert_eq!(unsafe { js_corpus_len(back) }, 4);
    unsafe {
        js_corpus_free(corpus);
        js_corpus_free(back);
        js_corpus_free(ptr::null_mut());
    }
    assert_eq!(unsafe { js_corpus_len(ptr::null()) }, 0);
}

#[test]
fn train_then_evaluate_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = format!(
        r#"{{"data": {{"synth": {{"corpus": {CORPUS}, "valid_utterances": 1}}}},
            "model": {{"hidden": 3, "mel_channels": 3}},
            "schedule": {{"strategy": {{"kind": "alternated", "epochs_per_phase": 1, "freeze": true}}, "total_epochs": 2}},
            "output_dir": {:?}, "seed": 4}}"#,
        out.to_str().unwrap()
    );
    let config = cstr(&config);
    let mut report = ptr::null_mut();
    assert_eq!(
        unsafe { js_train(config.as_ptr(), &mut report) },
        JsStatus::Ok,
        "{}",
        last_error()
    );
    let text = unsafe { CStr::from_ptr(report) }.to_str().unwrap().to_owned();
    unsafe { js_string_free(report) };
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["epochs"], 2);
    assert_eq!(json["updates"], 6);

    let stem = cstr(out.join("model").to_str().unwrap());
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { js_model_load(stem.as_ptr(), &mut model) },
        JsStatus::Ok,
        "{}",
        last_error()
    );
    assert!(unsafe { js_model_num_parameters(model) } > 0);

    let cfg = cstr(CORPUS);
    let mut corpus = ptr::null_mut();
    assert_eq!(
        unsafe { js_corpus_generate(cfg.as_ptr(), 4, &mut corpus) },
        JsStatus::Ok
    );
    let mut res = JsEvalResult::default();
    assert_eq!(
        unsafe { js_model_evaluate(model, corpus, &mut res) },
        JsStatus::Ok,
        "{}",
        last_error()
    );
    assert!(res.enh_loss > 0.0 && res.asr_loss > 0.0);
    assert!(res.per.is_finite() && res.per >= 0.0);

    let copy = cstr(dir.path().join("copy").to_str().unwrap());
    assert_eq!(unsafe { js_model_save(model, copy.as_ptr()) }, JsStatus::Ok);
    assert_eq!(
        std::fs::read(out.join("model.bin")).unwrap(),
        std::fs::read(dir.path().join("copy.bin")).unwrap()
    );
    unsafe {
        js_model_free(model);
        js_corpus_free(corpus);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/jointspeech.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "js_ctc_loss",
        "js_model_evaluate",
        "js_train",
        "JS_STATUS_PANIC",
        "typedef struct JsModel JsModel",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(status.success());
}
