use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_jointspeech"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn mapping() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/timit_61_to_39.map")
}

fn write_config(dir: &Path, strategy: &str, epochs: usize) -> PathBuf {
    let text = format!(
        r#"{{
        "data": {{"synth": {{"corpus": {{"utterances": 6, "frames_min": 10, "frames_max": 12, "bins": 8,
                  "visual_dim": 2, "phones": 4, "phones_min": 2, "phones_max": 3}}, "valid_utterances": 2}}}},
        "model": {{"hidden": 3, "mel_channels": 3}},
        "schedule": {{"strategy": {strategy}, "total_epochs": {epochs}}},
        "output_dir": {:?},
        "seed": 3
    }}"#,
        dir.join("out").to_str().unwrap()
    );
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

const ALTERNATED: &str = r#"{"kind": "alternated", "epochs_per_phase": 1, "freeze": true}"#;

#[test]
fn gen_corpus_writes_a_loadable_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ALTERNATED, 2);
    let corpus = dir.path().join("corpus");
    let o = run(&[
        "gen-corpus",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        corpus.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["utterances"], 6);
    assert_eq!(summary["manifest_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(jointspeech::features::load_corpus(&corpus).unwrap().len(), 6);
}

#[test]
fn train_then_eval_with_folding() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ALTERNATED, 4);
    let o = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in ["config.json", "history.csv", "model.json", "model.bin"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let history = jointspeech::eval::read_curves(&out.join("history.csv")).unwrap();
    assert_eq!(history.len(), 4);
    let phases = fs::read_dir(out.join("checkpoints")).unwrap().count();
    assert_eq!(phases, 8, "4 phases x (json, bin)");

    let corpus = dir.path().join("corpus");
    assert_eq!(
        code(&run(&[
            "gen-corpus",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            corpus.to_str().unwrap()
        ])),
        0
    );
    let report = dir.path().join("report.json");
    let o = run(&[
        "eval",
        "--checkpoint",
        out.join("model").to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
        "--mapping",
        mapping().to_str().unwrap(),
        "--per39",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let (p61, p39) = (r["per_61"].as_f64().unwrap(), r["per_39"].as_f64().unwrap());
    assert!(p39 <= p61 + 1e-12, "folding can only merge classes: {p39} > {p61}");
    assert_eq!(r["utterances"], 6);

    let o = run(&[
        "eval",
        "--checkpoint",
        out.join("model").to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
    ]);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["per_39"].is_null());
}

#[test]
fn folded_per_requires_a_mapping() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["eval", "--checkpoint", "x", "--corpus", "y", "--per39"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mapping"));
    let missing = dir.path().join("none.map");
    let o = run(&[
        "eval",
        "--checkpoint",
        "x",
        "--corpus",
        "y",
        "--mapping",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn grad_check_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ALTERNATED, 1);
    let o = run(&["grad-check", "--config", cfg.to_str().unwrap(), "--max-entries", "6"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("out/grad_check.json").is_file());
    let o = run(&[
        "grad-check",
        "--config",
        cfg.to_str().unwrap(),
        "--max-entries",
        "6",
        "--corrupt",
        "asr.output.weight",
    ]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let failing: Vec<&str> = stdout.lines().filter(|l| l.ends_with("FAIL")).collect();
    assert_eq!(failing.len(), 1, "{stdout}");
    assert!(failing[0].starts_with("asr.output.weight"));
}

#[test]
fn bad_configs_exit_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ALTERNATED, 1);
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("\"seed\": 3", "\"seed\": 3, \"momentum\": 0.9");
    fs::write(&cfg, text).unwrap();
    let o = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("out").exists());

    let cfg = write_config(dir.path(), ALTERNATED, 1);
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("\"phones_max\": 3", "\"phones_max\": 12");
    fs::write(&cfg, text).unwrap();
    assert_eq!(code(&run(&["gen-corpus", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"kind": "joint_loss", "lambda": {"mode": "fixed", "lambda": 1.0}}"#,
        1,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        let o = run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_ne!(
        fs::read(a.join("model.bin")).unwrap(),
        fs::read(b.join("model.bin")).unwrap()
    );
    let echoed: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["seed"], 2);
}
