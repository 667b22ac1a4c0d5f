use std::path::Path;
use std::process::Command;

const TINY: &str = r#"{
    "n_replicates": 2,
    "hidden_layers": [4],
    "algorithms": [
        {"algorithm": "sgld", "step_sizes": [1e-6, 1e-5]},
        {"algorithm": "swag", "step_sizes": [1e-5]},
        {"algorithm": "deep-ensemble", "step_sizes": [1e-2]}
    ],
    "hmc": {"leapfrog_steps": 8, "iterations": 40, "burn_in": 10, "n_chains": 2},
    "sgmcmc": {"iterations": 300, "thin_target": 10},
    "swag": {"iterations": 100, "n_samples": 20, "rank": 5},
    "ensemble": {"members": 4, "opt": {"iterations": 100}},
    "map": {"iterations": 200},
    "matrix_points": 20,
    "lengthscale_subsample": 60
}"#;

fn bnnbench(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bnnbench"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run(config: &Path, out: &Path, workers: &str) {
    let status = bnnbench(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--workers",
        workers,
        "--seed",
        "7",
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

#[test]
fn results_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.json");
    std::fs::write(&config, TINY).unwrap();
    let (one, eight) = (dir.path().join("w1"), dir.path().join("w8"));
    run(&config, &one, "1");
    run(&config, &eight, "8");
    for name in [
        "results.csv",
        "aggregates.csv",
        "mmd_matrix_af1.csv",
        "mds_af1.csv",
        "coverage_curves_af1.csv",
    ] {
        let a = std::fs::read(one.join(name)).unwrap();
        let b = std::fs::read(eight.join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs");
    }
    let resolved = std::fs::read_to_string(one.join("config.json")).unwrap();
    assert!(resolved.contains("\"seed\": 7"));

    let compare = bnnbench(&[
        "compare",
        "--config",
        config.to_str().unwrap(),
        "--out",
        one.to_str().unwrap(),
    ]);
    assert!(compare.status.success());
    let summary = std::fs::read_to_string(one.join("comparison_summary.csv")).unwrap();
    assert!(summary.starts_with("task,label,level,n_replicates,mcp,picp_std"));
    assert!(one.join("comparison_af1.csv").exists());

    let before = std::fs::read(one.join("mds_af1.csv")).unwrap();
    let mds = bnnbench(&[
        "mds",
        "--config",
        config.to_str().unwrap(),
        "--out",
        one.to_str().unwrap(),
    ]);
    assert!(mds.status.success());
    assert_eq!(std::fs::read(one.join("mds_af1.csv")).unwrap(), before);
}

#[test]
fn generate_writes_datasets_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = bnnbench(&["generate", "--out", dir.path().to_str().unwrap(), "--seed", "3"]);
    assert!(out.status.success());
    let manifest = std::fs::read_to_string(dir.path().join("datasets/af1_manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\""));
    assert!(dir.path().join("datasets/af1_train_019.csv").exists());
    assert!(dir.path().join("datasets/af1_test.csv").exists());
}

#[test]
fn fatal_errors_exit_non_zero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"n_replicates": 0}"#).unwrap();
    let out = bnnbench(&[
        "run",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let missing = bnnbench(&["compare", "--out", dir.path().join("nowhere").to_str().unwrap()]);
    assert!(!missing.status.success());
    let scale = bnnbench(&["run", "--scale", "huge"]);
    assert!(!scale.status.success());
}
