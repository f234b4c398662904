use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rkhs-covd"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn synth(dir: &Path) {
    let out = run(
        dir,
        &[
            "synth",
            "--mode",
            "covariance-shift",
            "--per-class",
            "4",
            "--m",
            "40",
            "--out",
            "data",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn dist_and_classify_from_a_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let cfg = r#"{
        "kernel": {"type": "rbf", "sigma": 2.0},
        "r": 5,
        "divergence": "jeffreys",
        "io": {"train": "data/train/manifest.json", "test": "data/test/manifest.json", "output_dir": "out"}
    }"#;
    fs::write(tmp.path().join("run.json"), cfg).unwrap();
    let out = run(tmp.path(), &["--config", "run.json", "classify"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("overall"), "{stdout}");
    let preds = fs::read_to_string(tmp.path().join("out/predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 9);

    let out = run(
        tmp.path(),
        &[
            "--config",
            "run.json",
            "--r",
            "3",
            "dist",
            "--manifest",
            "data/train/manifest.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/distances.json")).unwrap()).unwrap();
    assert_eq!(sidecar["config"]["r"], 3);
    assert_eq!(sidecar["divergence"], "jeffreys_hat");
}

#[test]
fn exit_codes_follow_error_categories() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());

    fs::write(tmp.path().join("bad.json"), r#"{"kernal": {"type": "linear"}}"#).unwrap();
    let out = run(tmp.path(), &["--config", "bad.json", "verify"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("kernal"));

    assert_eq!(code(&run(tmp.path(), &["--r", "0", "verify"])), 2);
    assert_eq!(code(&run(tmp.path(), &["dist"])), 2);
    assert_eq!(code(&run(tmp.path(), &["dist", "--manifest", "missing.json"])), 3);

    fs::write(tmp.path().join("data/train/sample_0.csv"), "1,2,3\n4,x,6\n").unwrap();
    let out = run(tmp.path(), &["dist", "--manifest", "data/train/manifest.json"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn numeric_failure_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("d")).unwrap();
    // rank-one observations make the observation-space covariance singular
    fs::write(tmp.path().join("d/a.csv"), "1,2\n2,4\n3,6\n").unwrap();
    fs::write(tmp.path().join("d/b.csv"), "1,0\n0,1\n1,1\n").unwrap();
    fs::write(
        tmp.path().join("d/manifest.json"),
        r#"{"samples": [{"path": "a.csv", "label": "a"}, {"path": "b.csv", "label": "b"}]}"#,
    )
    .unwrap();
    fs::write(tmp.path().join("obs.json"), r#"{"space": "observation"}"#).unwrap();
    let out = run(
        tmp.path(),
        &["--config", "obs.json", "dist", "--manifest", "d/manifest.json"],
    );
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_passes_and_negative_control_fails() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("v.json"), r#"{"verify": {"trials": 4}}"#).unwrap();
    let out = run(tmp.path(), &["--config", "v.json", "verify"]);
    assert_eq!(code(&out), 0);
    let report = String::from_utf8(out.stdout).unwrap();
    for name in rkhs_covd::verify::CHECK_NAMES {
        assert_eq!(report.matches(&format!(" {name} ")).count(), 1, "{report}");
    }
    assert!(!report.contains("FAIL"));

    let out = run(tmp.path(), &["--config", "v.json", "verify", "--corrupt-w"]);
    assert_eq!(code(&out), 5);
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(
        report.lines().any(|l| l.starts_with("FAIL eigen_gram_identity")),
        "{report}"
    );
}

#[test]
fn bench_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"bench": {"m_values": [10, 15, 20], "n": 3, "r": 3, "pairs": 100, "repeats": 1}}"#;
    fs::write(tmp.path().join("b.json"), cfg).unwrap();
    let out = run(tmp.path(), &["--config", "b.json", "bench", "--out", "bench"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("bench/bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert!(String::from_utf8(out.stdout).unwrap().contains("log-log exponent"));
}
