use std::path::Path;
use std::process::{Command, Output};

fn fec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fec")).current_dir(dir).args(args).env_remove("FEC_SEED").output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn config_dump_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let dumped = ok(&fec(d.path(), &["config", "--dump"]));
    std::fs::write(d.path().join("a.toml"), &dumped).unwrap();
    let again = ok(&fec(d.path(), &["config", "--dump", "--config", "a.toml"]));
    assert_eq!(dumped, again);
}

#[test]
fn seed_env_overrides_file() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("a.toml"), "seed = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fec")).current_dir(d.path()).args(["config", "--dump", "--config", "a.toml"]).env("FEC_SEED", "42").output().unwrap();
    assert!(ok(&out).starts_with("seed = 42\n"));
}

#[test]
fn synth_run_report_and_batch() {
    let d = tempfile::tempdir().unwrap();
    ok(&fec(d.path(), &["synth", "--entities", "60", "--claims", "300", "--seed", "2", "--dataset", "claims.jsonl", "--corpus", "corpus.jsonl"]));
    std::fs::write(d.path().join("h.toml"), "output_dir = \"h\"\n").unwrap();
    std::fs::write(d.path().join("c.toml"), "output_dir = \"c\"\n[corrector]\nkind = \"copy\"\n").unwrap();
    ok(&fec(d.path(), &["config", "--config", "h.toml"]));
    ok(&fec(d.path(), &["run", "--config", "h.toml"]));
    ok(&fec(d.path(), &["run", "--config", "c.toml"]));
    let table = ok(&fec(d.path(), &["report", "h", "c"]));
    assert_eq!(table.lines().count(), 4, "{table}");
    assert!(table.contains("| copy"));

    ok(&fec(d.path(), &["batch", "--run", "h", "c", "--dataset", "claims.jsonl", "--raters", "r1,r2", "--sample-per-system", "10", "--out", "batch.json"]));
    let batch: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("batch.json")).unwrap()).unwrap();
    let tasks = batch["tasks"].as_array().unwrap();
    assert_eq!(tasks.len(), 20);
    assert_eq!(tasks.iter().filter(|t| t["raters"].as_array().unwrap().len() == 2).count(), 4);
}

#[test]
fn failing_stage_is_named_with_nonzero_exit() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("x.toml"), "[corrector]\nkind = \"external\"\nendpoint = \"tcp://127.0.0.1:1\"\n").unwrap();
    let out = fec(d.path(), &["run", "--config", "x.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage load failed"));

    ok(&fec(d.path(), &["synth", "--entities", "30", "--claims", "100", "--dataset", "claims.jsonl", "--corpus", "corpus.jsonl"]));
    let out = fec(d.path(), &["run", "--config", "x.toml"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage correct failed") && err.contains("127.0.0.1:1"), "{err}");
    assert!(d.path().join("run/masks.jsonl").is_file());
}

#[test]
fn score_line_files() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("s.txt"), "a b c\nparis is in spain .\n").unwrap();
    std::fs::write(d.path().join("o.txt"), "a b c\nparis is in france .\n").unwrap();
    std::fs::write(d.path().join("r.txt"), "a b c\nparis is in france .\n").unwrap();
    let out = ok(&fec(d.path(), &["score", "--source", "s.txt", "--output", "o.txt", "--reference", "r.txt"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["instances"].as_array().unwrap().len(), 2);
    assert_eq!(v["instances"][0]["scores"]["sari"]["final_score"], 1.0);
    assert_eq!(v["mean"]["sari_final"], 1.0);
    assert!(!fec(d.path(), &["score", "--source", "s.txt"]).status.success());
}
