use std::path::Path;
use std::process::Command;

use koopman_adapt::config::{ControllerKind, ExperimentConfig};
use koopman_adapt::experiment::{run_path, Experiment};
use koopman_adapt::{io, report};

fn tiny(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        runs: 2,
        steps: 12,
        seed: 3,
        output_dir: dir.to_path_buf(),
        ..Default::default()
    };
    cfg.offline.trajectories = 12;
    cfg.offline.length = 15;
    cfg.offline.train.epochs = 2;
    cfg.offline.train.hidden = vec![6];
    cfg.rff.features = 16;
    cfg.rff_bandwidth_samples = 40;
    cfg
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_koopman-adapt"))
}

#[test]
fn report_recomputes_the_written_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("exp");
    let cfg = tiny(&dir);
    let exp = Experiment::prepare(cfg.clone()).unwrap();
    let out = exp.run_and_write(cfg.true_plant, &dir).unwrap();

    let r = report::analyze(&dir).unwrap();
    assert!(r.summary_consistent);
    assert_eq!(r.config.runs, 2);
    assert_eq!(r.metrics.len(), ControllerKind::ALL.len());
    for m in &r.metrics {
        assert_eq!(m.complete_runs + m.failed_runs, 2, "{}", m.controller);
    }

    // Run logs round-trip through CSV with one row per time index.
    let first = &out.results[&ControllerKind::Nominal][0];
    let (name, steps) = io::read_run_csv(&run_path(&dir, "nominal", 0)).unwrap();
    assert_eq!(name, "nominal");
    assert_eq!(steps.len(), first.steps.len());
    for (a, b) in steps.iter().zip(&first.steps) {
        assert_eq!(a.x, b.x);
        assert_eq!(a.u, b.u);
    }

    // Any edit to summary.csv is detected.
    let path = dir.join("summary.csv");
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 2;
    bytes[last] = if bytes[last] == b'1' { b'2' } else { b'1' };
    std::fs::write(&path, bytes).unwrap();
    assert!(!report::analyze(&dir).unwrap().summary_consistent);
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"runs": 0}"#).unwrap();
    let status = bin().arg("run").arg(&bad).output().unwrap().status;
    assert_eq!(status.code(), Some(2));

    let missing = bin().arg("report").arg(tmp.path().join("nope")).output().unwrap().status;
    assert_eq!(missing.code(), Some(2));

    let verify = bin().arg("verify").output().unwrap();
    assert_eq!(verify.status.code(), Some(0), "{}", String::from_utf8_lossy(&verify.stdout));
}
