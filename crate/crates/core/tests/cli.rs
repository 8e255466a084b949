use std::path::Path;
use std::process::{Command, Output};

fn defw(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_defw"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn defw")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL_LASSO: &str =
    "kind = \"lasso\"\niterations = 30\n[lasso]\nm = 10\nd = 60\ns = 4\n[network]\nn_agents = 5\n";

#[test]
fn run_writes_csv_with_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), SMALL_LASSO).unwrap();
    let out = defw(&["run", "--config", "cfg.toml", "--out", "m.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "wrote m.csv");
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iter,objective,suboptimality,gap,consensus_err,grad_consensus_err,tracking_err,bound_cp,bound_cg,\
         nnz_or_rank,comm_reals,comm_indices,wall_ms"
    );
    assert_eq!(lines.count(), 30);
}

#[test]
fn seed_flag_changes_the_instance() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), SMALL_LASSO).unwrap();
    for (seed, name) in [("1", "a.csv"), ("2", "b.csv")] {
        let out = defw(
            &["run", "--config", "cfg.toml", "--seed", seed, "--out", name],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn zero_iterations_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), "kind = \"lasso\"\niterations = 0\n").unwrap();
    let out = defw(&["run", "--config", "cfg.toml"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("error:"), "{}", stderr(&out));
}

#[test]
fn unknown_config_field_and_flag_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), "kind = \"lasso\"\nbogus = 1\n").unwrap();
    let out = defw(&["run", "--config", "cfg.toml"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bogus"), "{}", stderr(&out));

    let out = defw(&["run", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = defw(&["run", "--config", "absent.toml"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("does not exist"), "{}", stderr(&out));
}

#[test]
fn rates_fits_an_exact_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("iter,suboptimality\n");
    for t in 1..=1000 {
        csv.push_str(&format!("{t},{:e}\n", 5.0 / t as f64));
    }
    std::fs::write(dir.path().join("run.csv"), csv).unwrap();
    let out = defw(
        &[
            "rates",
            "--input",
            "run.csv",
            "--series",
            "suboptimality",
            "--window",
            "100:1000",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let fit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((fit["slope"].as_f64().unwrap() + 1.0).abs() < 1e-9);
    assert!((fit["intercept"].as_f64().unwrap() - 5f64.ln()).abs() < 1e-9);
    assert_eq!(fit["points"].as_u64(), Some(901));

    let out = defw(&["rates", "--input", "run.csv", "--window", "1000"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn oracle_bench_and_datagen_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = defw(
        &["oracle-bench", "--sizes", "4,8", "--reps", "1", "--out", "bench.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let bench = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(bench.lines().count(), 5);
    assert!(bench.starts_with("set,size,lo_ms,projection_ms\n"));

    std::fs::write(dir.path().join("cfg.toml"), SMALL_LASSO).unwrap();
    let out = defw(&["datagen", "--config", "cfg.toml", "--out", "inst"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let files = std::fs::read_dir(dir.path().join("inst")).unwrap().count();
    assert!(files > 0);
}

#[test]
fn zero_threads_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), SMALL_LASSO).unwrap();
    let out = defw(&["--threads", "0", "run", "--config", "cfg.toml"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = defw_core::harness::ExperimentConfig::load(&path, defw_core::harness::Preset::Desk)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap();
        seen += 1;
    }
    assert!(seen >= 4);
}
