//! Command-line interface tests against the compiled binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn resae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resae"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stdout);
    let last = text.lines().last().unwrap_or_else(|| panic!("no stdout: {:?}", out));
    serde_json::from_str(last).unwrap_or_else(|e| panic!("bad JSON {:?}: {}", last, e))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

fn gen_toy(dir: &Path, extra: &[&str]) {
    let out_dir = dir.join("data");
    let mut args = vec![
        "gen-toy".to_string(),
        "--seed".into(),
        "7".into(),
        "--set".into(),
        format!("out_dir={}", out_dir.display()),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    let out = Command::new(env!("CARGO_BIN_EXE_resae"))
        .args(&args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{:?}", out);
}

fn tiny_train_config(dir: &Path, run_dir: &Path) -> std::path::PathBuf {
    write_config(
        dir,
        &format!(
            r#"
train_path = "{d}/data/train.txt"
valid_path = "{d}/data/valid.txt"
test_path = "{d}/data/test.txt"
dim = 8
decoder_heads = 2
decoder_hidden = 16
encoder_dropout = 0.0
decoder_dropout = 0.0
batch_size = 32
epochs = 3
lr = 0.001
eval_every = 3
seed = 7
run_dir = "{r}"
"#,
            d = dir.display(),
            r = run_dir.display()
        ),
    )
}

#[test]
fn gen_toy_output_feeds_stats() {
    let tmp = tempfile::tempdir().unwrap();
    gen_toy(tmp.path(), &[]);
    let cfg = write_config(
        tmp.path(),
        &format!("train_path = \"{}/data/train.txt\"\n", tmp.path().display()),
    );
    let out = resae(&["stats", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{:?}", out);
    let stats = stdout_json(&out);
    assert_eq!(stats["num_facts"], 160);
    assert_eq!(stats["num_relations"], 8);
}

#[test]
fn gen_toy_is_byte_identical_for_a_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    gen_toy(a.path(), &[]);
    gen_toy(b.path(), &[]);
    for name in ["train.txt", "valid.txt", "test.txt"] {
        let fa = fs::read(a.path().join("data").join(name)).unwrap();
        let fb = fs::read(b.path().join("data").join(name)).unwrap();
        assert_eq!(fa, fb, "{} differs", name);
    }
}

#[test]
fn gen_toy_full_ratio_reports_all_qualified() {
    let tmp = tempfile::tempdir().unwrap();
    gen_toy(tmp.path(), &["--set", "toy_qualifier_ratio=1.0"]);
    let cfg = write_config(
        tmp.path(),
        &format!(
            "train_path = \"{d}/data/train.txt\"\nvalid_path = \"{d}/data/valid.txt\"\ntest_path = \"{d}/data/test.txt\"\n",
            d = tmp.path().display()
        ),
    );
    let out = resae(&["stats", "--config", cfg.to_str().unwrap()]);
    let stats = stdout_json(&out);
    assert_eq!(stats["pct_with_qualifiers"], 100.0);
}

#[test]
fn stats_on_inline_three_fact_file() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("facts.txt"), "a,r,b\nb,r,c,q,a\nc,s,a\n").unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("train_path = \"{}/facts.txt\"\n", tmp.path().display()),
    );
    let out = resae(&["stats", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let stats = stdout_json(&out);
    assert_eq!(stats["num_facts"], 3);
    assert_eq!(stats["num_with_qualifiers"], 1);
}

#[test]
fn missing_file_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "train_path = \"/nonexistent/file.txt\"\n");
    let out = resae(&["stats", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{:?}", out);
}

#[test]
fn malformed_data_is_a_runtime_failure_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("facts.txt"), "a,r,b\nbroken,line\n").unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("train_path = \"{}/facts.txt\"\n", tmp.path().display()),
    );
    let out = resae(&["stats", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
}

#[test]
fn dropout_of_one_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "encoder_dropout = 1.0\n");
    let out = resae(&["stats", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dropout"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "mystery_knob = 3\n");
    let out = resae(&["stats", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery_knob"));
}

#[test]
fn train_writes_trace_checkpoint_and_reloadable_config() {
    let tmp = tempfile::tempdir().unwrap();
    gen_toy(tmp.path(), &[]);
    let run_dir = tmp.path().join("run");
    let cfg = tiny_train_config(tmp.path(), &run_dir);
    let out = resae(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{:?}", out);
    assert!(run_dir.join("trace.jsonl").exists());
    assert!(run_dir.join("best.ckpt").exists());
    // the echoed effective config is itself a valid config that reproduces
    // the run settings
    let echoed = run_dir.join("config.toml");
    assert!(echoed.exists());
    let text = fs::read_to_string(&echoed).unwrap();
    assert!(text.contains("dim = 8"));
    let out2 = resae(&["stats", "--config", echoed.to_str().unwrap()]);
    assert!(out2.status.success(), "echoed config not reloadable: {:?}", out2);
    // each trace line is a JSON object with the expected fields
    for line in fs::read_to_string(run_dir.join("trace.jsonl")).unwrap().lines() {
        let event: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["epoch", "split", "mrr", "hits1", "hits10", "head", "tail", "wall_time_s"] {
            assert!(event.get(key).is_some(), "missing {} in {}", key, line);
        }
        assert!(event["hits1"].as_f64() <= event["hits10"].as_f64());
    }
}

#[test]
fn eval_reports_ordering_invariants_and_honors_split() {
    let tmp = tempfile::tempdir().unwrap();
    gen_toy(tmp.path(), &[]);
    let run_dir = tmp.path().join("run");
    let cfg = tiny_train_config(tmp.path(), &run_dir);
    assert!(resae(&["train", "--config", cfg.to_str().unwrap()]).status.success());
    let ckpt = run_dir.join("best.ckpt");
    let out = resae(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--split",
        "train",
    ]);
    assert!(out.status.success(), "{:?}", out);
    let report = stdout_json(&out);
    let (h1, h10, mrr) = (
        report["hits1"].as_f64().unwrap(),
        report["hits10"].as_f64().unwrap(),
        report["mrr"].as_f64().unwrap(),
    );
    assert!(h1 <= h10 && h10 <= 1.0);
    assert!(h1 <= mrr && mrr <= 1.0);
    assert_eq!(report["queries"], 320);
}

#[test]
fn eval_of_empty_split_fails_with_no_queries() {
    let tmp = tempfile::tempdir().unwrap();
    gen_toy(tmp.path(), &[]);
    // empty test file
    fs::write(tmp.path().join("data/test.txt"), "").unwrap();
    let run_dir = tmp.path().join("run");
    let cfg = tiny_train_config(tmp.path(), &run_dir);
    assert!(resae(&["train", "--config", cfg.to_str().unwrap()]).status.success());
    let out = resae(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        run_dir.join("best.ckpt").to_str().unwrap(),
        "--split",
        "test",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no queries"));
}

#[test]
fn grad_check_refuses_large_dims() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "dim = 200\n");
    let out = resae(&["grad-check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("16"));
}

#[test]
fn grad_check_passes_on_the_default_tiny_setup() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "dim = 8\ndecoder_heads = 2\ndecoder_hidden = 16\n");
    let out = resae(&["grad-check", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{:?}", out);
    let report = stdout_json(&out);
    assert_eq!(report["pass"], true);
    assert!(report["max_rel_err"].as_f64().unwrap() < 1e-4);
}

#[test]
fn invalid_thread_cap_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = Command::new(env!("CARGO_BIN_EXE_resae"))
        .args(["stats", "--config", cfg.to_str().unwrap()])
        .env("RESAE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
