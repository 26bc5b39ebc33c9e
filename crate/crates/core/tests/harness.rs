use std::path::{Path, PathBuf};
use std::process::Command;

use speedlab::harness::{self, execute, ExitStatus, ExperimentConfig, OutputFormat, Verb};
use speedlab::Error;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&configs().join(name)).unwrap();
    cfg.output.dir = out.to_path_buf();
    cfg
}

fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_speedlab")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap();
            assert_eq!(ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap(), cfg, "{}", path.display());
            n += 1;
        }
    }
    assert!(n >= 6);
}

#[test]
fn fdl_sweep_emits_loss_header_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (status, res) = harness::run(&load("fdl_sweep.toml", dir.path()), Verb::SweepFdl, &configs());
    assert_eq!(status, ExitStatus::Success);
    let (_, paths) = res.unwrap();
    assert!(paths.iter().any(|p| p.ends_with("config.toml")));
    let loss = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    let mut lines = loss.lines();
    assert_eq!(lines.next().unwrap(), "lambda,a,b,sup_log_gain,delta_hat,kov_exp,hyp_ceiling,tar_ceiling,pass");
    assert_eq!(lines.count(), 4);
    assert!(!loss.contains('\r'));
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let (d1, d4) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut c1 = load("fdl_sweep.toml", d1.path());
    c1.workers = 1;
    let mut c4 = load("fdl_sweep.toml", d4.path());
    c4.workers = 4;
    harness::run(&c1, Verb::Run, &configs()).1.unwrap();
    harness::run(&c4, Verb::Run, &configs()).1.unwrap();
    for f in ["loss.csv", "zones.csv"] {
        assert_eq!(std::fs::read(d1.path().join(f)).unwrap(), std::fs::read(d4.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn empty_lambda_grid_gives_header_only_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("fdl_sweep.toml", dir.path());
    cfg.lambda = Some(harness::GeometricGrid { start: 100.0, ratio: 10.0, count: 0 });
    let out = execute(&cfg, Verb::SweepFdl, &configs()).unwrap();
    let loss = out.table("loss").unwrap();
    assert!(loss.rows.is_empty());
    assert_eq!(loss.to_csv().lines().count(), 1);
}

#[test]
fn infeasible_windows_are_reported_as_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("activator.toml", dir.path());
    cfg.lambda = Some(harness::GeometricGrid { start: 2.0, ratio: 10.0, count: 3 });
    let out = execute(&cfg, Verb::VerifyActivator, &configs()).unwrap();
    assert_eq!(out.passed, None);
    let windows = out.table("windows").unwrap();
    assert_eq!(windows.rows.len(), 3);
    let csv = windows.to_csv();
    assert!(csv.lines().nth(1).unwrap().contains("false"), "{csv}");
}

#[test]
fn verify_activator_certifies_every_feasible_window() {
    let dir = tempfile::tempdir().unwrap();
    let out = execute(&load("activator.toml", dir.path()), Verb::VerifyActivator, &configs()).unwrap();
    let certs = out.table("certificates").unwrap();
    assert_eq!(certs.rows.len(), 4);
    assert!(out.table("failures").unwrap().rows.is_empty());
    assert!(certs.to_csv().lines().skip(1).all(|l| l.ends_with("true")));
}

#[test]
fn dependence_probe_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let out = execute(&load("dependence.toml", dir.path()), Verb::ProbeDependence, &configs()).unwrap();
    assert_eq!(out.passed, Some(true));
    assert_eq!(out.table("dependence").unwrap().rows.len(), 7);
}

#[test]
fn json_lines_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("membership.toml", dir.path());
    cfg.output.format = OutputFormat::JsonLines;
    let (status, _) = harness::run(&cfg, Verb::CheckSpeed, &configs());
    assert_eq!(status, ExitStatus::Success);
    let text = std::fs::read_to_string(dir.path().join("membership.jsonl")).unwrap();
    let row: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(row["pass"], serde_json::Value::Bool(true));
}

#[test]
fn mismatched_verb_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = execute(&load("dependence.toml", dir.path()), Verb::SweepFdl, &configs()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert_eq!(ExitStatus::of_error(&err).code(), 2);
}

#[test]
fn validation_lists_every_problem() {
    let text = "kind = \"fdl-sweep\"\nworkers = 0\n[speed]\nfamily = \"constant\"\nvalue = -1.0\nhorizon = 0.5\n\
                [output]\ndir = \"o\"\n";
    match ExperimentConfig::parse(text) {
        Err(Error::Config(p)) => assert!(p.len() >= 3, "{p:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = |n: &str| configs().join(n).to_str().unwrap().to_owned();

    assert_eq!(cli(&["probe-dependence", "--config", &cfg("dependence.toml"), "--out", out]).0, 0);
    assert_eq!(cli(&["sweep-fdl", "--config", &cfg("dependence.toml"), "--out", out]).0, 2);
    assert_eq!(cli(&["run", "--config", "/nonexistent.toml", "--out", out]).0, 2);

    // A membership spec the speed violates.
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(configs().join("membership.toml")).unwrap().replace("scale = 2.0", "scale = 0.5");
    std::fs::write(&bad, text).unwrap();
    let (code, stderr) = cli(&["check-speed", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(code, 1, "{stderr}");

    // A table file that is not there.
    let missing = dir.path().join("missing.toml");
    std::fs::write(
        &missing,
        "kind = \"membership\"\n[speed]\nfamily = \"table\"\npath = \"nope.csv\"\n[output]\ndir = \"o\"\n\
         [spec]\nmu1 = 1.0\nmu2 = 3.0\nt0 = 0.5\nomega = { kind = \"log\" }\npsi = { kind = \"log\" }\norder = \"first\"\n",
    )
    .unwrap();
    assert_eq!(cli(&["check-speed", "--config", missing.to_str().unwrap(), "--out", out]).0, 3);

    assert_eq!(cli(&["sweep-fdl", "--config", &cfg("fdl_sweep.toml"), "--out", out, "--tol", "1.0"]).0, 2);
}
