//! End-to-end checks of the compiled binary: artifact layout, exit codes,
//! determinism of the deterministic artifacts, and flag validation.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kgforget::checkpoint::load_model;
use kgforget::datasets::{holdout_split, synth_toy, write_tsv, SynthConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kgforget"))
}

/// Small synthetic dataset written as a split directory.
fn make_dataset(dir: &Path) -> PathBuf {
    let cfg = SynthConfig {
        n_entities: 40,
        n_relations: 4,
        n_triples: 150,
        noise_frac: 0.2,
        planted_dim: 4,
        seed: 3,
    };
    let ds = synth_toy(&cfg).unwrap();
    let splits = holdout_split(&ds.graph, 0.1, 3).unwrap();
    let data = dir.join("data");
    std::fs::create_dir_all(&data).unwrap();
    write_tsv(&splits.full, splits.train.triples(), data.join("train.txt")).unwrap();
    write_tsv(&splits.full, &splits.test, data.join("test.txt")).unwrap();
    data
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Fast training flags shared by the smoke runs.
fn fast_flags(data: &Path, out: &Path) -> Vec<String> {
    [
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--dim",
        "8",
        "--epochs",
        "25",
        "--batch",
        "64",
        "--seed",
        "7",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn train_writes_the_full_artifact_set_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = make_dataset(tmp.path());
    let out1 = tmp.path().join("run1");
    let out2 = tmp.path().join("run2");

    for out in [&out1, &out2] {
        let output = bin()
            .arg("train")
            .args(fast_flags(&data, out))
            .output()
            .unwrap();
        assert_success(&output);
        for artifact in [
            "manifest.json",
            "model.kgun",
            "loss.csv",
            "eval.json",
            "run_stats.json",
        ] {
            assert!(out.join(artifact).is_file(), "missing {artifact}");
        }
    }
    // the checkpoint parses and matches the dataset shape
    let m = load_model(out1.join("model.kgun")).unwrap();
    assert_eq!(m.n_entities, 40);
    assert_eq!(m.dim, 8);

    // reruns agree on every deterministic artifact
    let bytes = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(
        bytes(&out1.join("model.kgun")),
        bytes(&out2.join("model.kgun"))
    );
    assert_eq!(
        bytes(&out1.join("loss.csv")),
        bytes(&out2.join("loss.csv"))
    );
    assert_eq!(
        bytes(&out1.join("eval.json")),
        bytes(&out2.join("eval.json"))
    );
    // identical config hash in the manifests (the out paths differ, so
    // compare the recorded hash of everything-but-out via the config field)
    let manifest = |p: &Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(p.join("manifest.json")).unwrap()).unwrap()
    };
    let m1 = manifest(&out1);
    let m2 = manifest(&out2);
    assert_eq!(m1["seed"], m2["seed"]);
    let strip_out = |mut v: serde_json::Value| {
        v["config"]["out"] = serde_json::Value::Null;
        v["config_hash"] = serde_json::Value::Null;
        v
    };
    assert_eq!(strip_out(m1), strip_out(m2));
}

#[test]
fn identical_invocations_record_identical_config_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = make_dataset(tmp.path());
    let out = tmp.path().join("run");
    for _ in 0..2 {
        let output = bin()
            .arg("train")
            .args(fast_flags(&data, &out))
            .output()
            .unwrap();
        assert_success(&output);
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
                .unwrap();
        let hash = manifest["config_hash"].as_str().unwrap().to_string();
        assert_eq!(hash.len(), 64);
        // same invocation → same hash on the rerun
        std::fs::write(tmp.path().join("hash"), &hash).unwrap();
    }
}

#[test]
fn missing_dataset_fails_on_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let output = bin()
        .arg("train")
        .args([
            "--dataset",
            tmp.path().join("nope.txt").to_str().unwrap(),
            "--out",
            tmp.path().join("run").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("nope.txt"), "stderr was: {stderr}");
}

#[test]
fn invalid_flag_values_are_usage_errors() {
    let output = bin()
        .args(["unlearn", "--checkpoint", "x.kgun", "--method", "frobnicate"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "clap usage error expected");
    let output = bin()
        .args(["train", "--khop", "many"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let output = bin()
        .args(["train", "--model", "complex"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unlearn_round_trip_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let data = make_dataset(tmp.path());
    let train_out = tmp.path().join("train");
    let output = bin()
        .arg("train")
        .args(fast_flags(&data, &train_out))
        .output()
        .unwrap();
    assert_success(&output);

    let unlearn_out = tmp.path().join("unlearn");
    let output = bin()
        .arg("unlearn")
        .args([
            "--checkpoint",
            train_out.join("model.kgun").to_str().unwrap(),
        ])
        .args(fast_flags(&data, &unlearn_out))
        .args(["--method", "zerofisher", "--delete-ratio", "0.05"])
        .output()
        .unwrap();
    assert_success(&output);

    let stats: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(unlearn_out.join("unlearn_stats.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(stats["method"], "zerofisher");
    assert_eq!(stats["remaining_grad_calls"], 0);
    assert_eq!(stats["hvp_calls"], 0);
    assert!(stats["support_size"].as_u64().unwrap() > 0);

    // the unlearned checkpoint differs from the original
    let before = std::fs::read(train_out.join("model.kgun")).unwrap();
    let after = std::fs::read(unlearn_out.join("model.kgun")).unwrap();
    assert_ne!(before, after);
    // deletion request persisted
    assert!(unlearn_out.join("deletion.json").is_file());
}

#[test]
fn eval_reports_reference_distance() {
    let tmp = tempfile::tempdir().unwrap();
    let data = make_dataset(tmp.path());
    let a = tmp.path().join("a");
    let output = bin()
        .arg("train")
        .args(fast_flags(&data, &a))
        .output()
        .unwrap();
    assert_success(&output);

    let eval_out = tmp.path().join("eval");
    let output = bin()
        .arg("eval")
        .args([
            "--checkpoint",
            a.join("model.kgun").to_str().unwrap(),
            "--reference",
            a.join("model.kgun").to_str().unwrap(),
        ])
        .args(fast_flags(&data, &eval_out))
        .output()
        .unwrap();
    assert_success(&output);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_out.join("eval.json")).unwrap())
            .unwrap();
    assert_eq!(report["l2_to_reference"], 0.0);
    assert!(report["mrr"].as_f64().unwrap() > 0.0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("MRR"), "stdout was: {stdout}");
}

#[test]
fn compare_emits_one_row_per_method_plus_baselines() {
    let tmp = tempfile::tempdir().unwrap();
    let data = make_dataset(tmp.path());
    let out = tmp.path().join("cmp");
    let output = bin()
        .arg("compare")
        .args(fast_flags(&data, &out))
        .args(["--delete-ratio", "0.05", "--iters", "5"])
        .output()
        .unwrap();
    assert_success(&output);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    let methods: Vec<&str> = rows
        .iter()
        .map(|r| r["method"].as_str().unwrap())
        .collect();
    assert_eq!(
        methods,
        ["original", "retrain", "kgif", "wf-kgif", "zerofisher"]
    );
    // the retrain row's distance to retrain is exactly zero
    let retrain_row = &rows[1];
    assert_eq!(retrain_row["l2_to_retrain"], 0.0);
    // checkpoints for every row
    for name in ["original", "retrain", "kgif", "wf-kgif", "zerofisher"] {
        assert!(out.join(format!("{name}.kgun")).is_file(), "missing {name}");
    }
    // both tables present, with the volatile one leading time/memory columns
    let compare_csv = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    assert!(compare_csv.starts_with("method,time_ms,peak_rss_bytes,mrr,hit3,hit1"));
    assert_eq!(compare_csv.lines().count(), 6);
    let metrics_csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics_csv.contains("l2_to_retrain"));
}

#[test]
fn sweep_emits_one_table_per_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let data = make_dataset(tmp.path());
    let out = tmp.path().join("sweep");
    let output = bin()
        .arg("sweep")
        .args(fast_flags(&data, &out))
        .args(["--sweep-ratios", "0.05,0.1", "--iters", "3", "--method", "zerofisher"])
        .output()
        .unwrap();
    assert_success(&output);
    for ratio in ["0.05", "0.1"] {
        let table = out.join(format!("ratio_{ratio}")).join("compare.csv");
        assert!(table.is_file(), "missing table for ratio {ratio}");
    }
}

#[test]
fn manifest_reproduces_the_run_as_a_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = make_dataset(tmp.path());
    let out1 = tmp.path().join("first");
    let output = bin()
        .arg("train")
        .args(fast_flags(&data, &out1))
        .output()
        .unwrap();
    assert_success(&output);

    // rerun purely from the manifest, overriding only the output directory
    let out2 = tmp.path().join("second");
    let output = bin()
        .arg("train")
        .args([
            "--config",
            out1.join("manifest.json").to_str().unwrap(),
            "--out",
            out2.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_success(&output);
    assert_eq!(
        std::fs::read(out1.join("model.kgun")).unwrap(),
        std::fs::read(out2.join("model.kgun")).unwrap(),
        "manifest-driven rerun must reproduce the checkpoint bit for bit"
    );
}
