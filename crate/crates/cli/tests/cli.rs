use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qkernel::config::SweepConfig;
use qkernel::io::{read_dataset, read_kernel, read_sym_matrix, write_dataset};
use qkernel::record::{load_results, RecordKind};
use qkernel::config::Format;
use qkernel::sweep::{prepare_pool, run_sweep};
use qkernel_core::datasets::{generate_synthetic, split, Dataset};
use serde_json::Value;
use tempfile::TempDir;

fn qkernel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkernel"))
        .args(args)
        .output()
        .expect("spawn qkernel")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synthetic_csv(dir: &TempDir, rows: usize, dim: usize, seed: u64) -> PathBuf {
    let ds = generate_synthetic(rows, dim, seed).unwrap();
    let labels = (0..rows)
        .map(|i| if ds.features.get(i, 0) > 0.0 { 1.0 } else { -1.0 })
        .collect();
    let ds = Dataset::new(ds.features, labels).unwrap();
    let path = dir.path().join("data.csv");
    write_dataset(&path, &ds, None).unwrap();
    path
}

const SMALL_SWEEP: &str = r#"{
    "dataset": {"synthetic": {"dim": 3}},
    "num_qubits": 2,
    "n_list": [8],
    "n_test": 6,
    "m_list": [50],
    "p_tilde_list": [0.01],
    "methods": ["clip"],
    "seeds": [4]
}"#;

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&qkernel(&["--help"])), 0);
    assert_eq!(code(&qkernel(&["--version"])), 0);
    assert_eq!(code(&qkernel(&["sweep", "--help"])), 0);
}

#[test]
fn argument_errors_exit_one() {
    assert_eq!(code(&qkernel(&[])), 1);
    assert_eq!(code(&qkernel(&["frobnicate"])), 1);
    assert_eq!(code(&qkernel(&["calibrate", "--kernel", "k.csv", "--method", "squash", "--out", "o"])), 1);
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&qkernel(&["sweep", "--config", p(&missing)])), 1);

    let typo = dir.path().join("typo.json");
    std::fs::write(&typo, SMALL_SWEEP.replace("\"seeds\"", "\"seedz\": [1], \"seeds\"")).unwrap();
    let out = qkernel(&["sweep", "--config", p(&typo), "--out", p(&dir.path().join("r.csv"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("seedz"));

    let invalid = dir.path().join("invalid.json");
    std::fs::write(&invalid, SMALL_SWEEP.replace("[0.01]", "[2.0]")).unwrap();
    assert_eq!(code(&qkernel(&["sweep", "--config", p(&invalid), "--out", "r.csv"])), 1);

    assert_eq!(code(&qkernel(&["check", "nonsense"])), 1);
}

#[test]
fn runtime_errors_exit_two_with_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_csv(&dir, 12, 3, 1);
    let cfg = dir.path().join("sweep.json");
    // 12 rows cannot supply n = 8 plus 6 test rows.
    std::fs::write(
        &cfg,
        SMALL_SWEEP.replace(r#"{"synthetic": {"dim": 3}}"#, &format!(r#"{{"csv": {{"path": {:?}}}}}"#, p(&data))),
    )
    .unwrap();
    let out_path = dir.path().join("results.csv");
    let out = qkernel(&["sweep", "--config", p(&cfg), "--out", p(&out_path)]);
    assert_eq!(code(&out), 2);
    let recs = load_results(&out_path, Format::Csv).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| r.error.as_deref().is_some_and(|e| e.contains("needs 14"))));
}

#[test]
fn thread_count_override_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_qkernel"))
        .args(["check", "bounds"])
        .env("QKERNEL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_qkernel"))
        .args(["check", "bounds"])
        .env("QKERNEL_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS bound-properties"));
}

#[test]
fn sweep_output_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    std::fs::write(&cfg, SMALL_SWEEP.replace("[4]", "[4, 5, 6]").replace("[50]", "[10, 50, \"inf\"]")).unwrap();
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let res = Command::new(env!("CARGO_BIN_EXE_qkernel"))
            .args(["sweep", "--config", p(&cfg), "--format", "json", "--out", p(&out)])
            .env("QKERNEL_THREADS", threads)
            .output()
            .unwrap();
        assert!(res.status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("1", "a.json"), run("3", "b.json"));
}

#[test]
fn kernel_calibrate_train_bound_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_csv(&dir, 20, 2, 7);
    let ideal = dir.path().join("q.csv");
    let noisy = dir.path().join("w.csv");
    let fixed = dir.path().join("w_clip.csv");

    let out = qkernel(&["kernel", "--data", p(&data), "--out", p(&ideal)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let q = read_kernel(&ideal).unwrap();
    assert_eq!(q.dim(), 20);
    assert!((0..20).all(|i| (q.matrix.get(i, i) - 1.0).abs() < 1e-12));

    let out = qkernel(&[
        "kernel", "--data", p(&data), "--p-tilde", "0.02", "--shots", "20", "--seed", "3", "--out", p(&noisy),
    ]);
    assert_eq!(code(&out), 0);
    let w = read_kernel(&noisy).unwrap();
    assert_eq!(w.provenance.name(), "shot_sampled");

    let out = qkernel(&[
        "calibrate", "--kernel", p(&noisy), "--method", "clip", "--reference", p(&ideal), "--out", p(&fixed),
    ]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed_lemma"], "pass");
    assert!(report["dist_after"].as_f64().unwrap() <= report["dist_before"].as_f64().unwrap());
    let c = read_sym_matrix(&fixed).unwrap();
    assert!(qkernel_core::linalg::eig_sym(&c).unwrap().min_eigenvalue() >= -1e-10);

    let out = qkernel(&["train", "--kernel", p(&ideal), "--data", p(&data)]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["train_accuracy"].as_f64().unwrap() >= 0.9);

    let out = qkernel(&["bound", "--kernel", p(&ideal), "--data", p(&data), "--ridge", "1e-6"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["term_noise"].as_f64(), Some(0.0));
    let c1 = report["c1"].as_f64().unwrap();
    assert!((report["term_ideal"].as_f64().unwrap() - (c1 / 20.0).sqrt()).abs() < 1e-12);
    assert_eq!(report["m"], "inf");
}

#[test]
fn bound_past_breakdown_reports_infinity() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_csv(&dir, 30, 2, 9);
    let ideal = dir.path().join("q.csv");
    assert_eq!(code(&qkernel(&["kernel", "--data", p(&data), "--out", p(&ideal)])), 0);
    let out = qkernel(&[
        "bound", "--kernel", p(&ideal), "--data", p(&data), "--shots", "100", "--p-tilde", "0.3", "--ridge", "1e-3",
    ]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["c2"].as_f64(), Some(0.0));
    assert_eq!(report["term_noise"], "inf");
}

#[test]
fn relabel_writes_balanced_labels() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_csv(&dir, 41, 4, 2);
    let out_path = dir.path().join("relabeled.csv");
    let out = qkernel(&["relabel", "--data", p(&data), "--qubits", "2", "--out", p(&out_path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ds = read_dataset(&out_path).unwrap();
    assert_eq!(ds.dim(), 2);
    let pos = ds.labels.iter().filter(|&&l| l > 0.0).count();
    assert_eq!(pos, 20);
}

/// Rewriting the labels of test rows must leave the RBF model selection
/// and training fit untouched.
#[test]
fn baseline_selection_ignores_test_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_csv(&dir, 60, 3, 11);
    let text = format!(
        r#"{{
        "dataset": {{"csv": {{"path": {:?}}}}},
        "num_qubits": 2,
        "n_list": [20],
        "n_test": 15,
        "m_list": ["inf"],
        "p_tilde_list": [0.0],
        "methods": ["none"],
        "relabel": {{"enabled": false}},
        "seeds": [3]
    }}"#,
        p(&data)
    );
    let cfg = SweepConfig::from_json(&text).unwrap();
    cfg.validate().unwrap();
    let before = run_sweep(&cfg);

    let pool = prepare_pool(&cfg, 3).unwrap();
    let s = split(&pool.data, 20, 15, 3).unwrap().split.unwrap();
    let mut ds = read_dataset(&data).unwrap();
    for &i in &s.test {
        let row = pool.source_rows[i];
        ds.labels[row] = -ds.labels[row];
    }
    write_dataset(&data, &ds, None).unwrap();
    let after = run_sweep(&cfg);

    let rbf = |recs: &[qkernel::record::ResultRecord]| {
        recs.iter().find(|r| r.kind == RecordKind::Rbf).cloned().unwrap()
    };
    let (a, b) = (rbf(&before), rbf(&after));
    assert!(a.error.is_none());
    assert_eq!(a.rbf_gamma, b.rbf_gamma);
    assert_eq!(a.rbf_lambda, b.rbf_lambda);
    assert_eq!(a.rbf_validation_accuracy, b.rbf_validation_accuracy);
    assert_eq!(a.train_accuracy, b.train_accuracy);
    let flipped = 1.0 - a.test_accuracy.unwrap();
    assert!((b.test_accuracy.unwrap() - flipped).abs() < 1e-12);
}
