//! Post-hoc analysis of an experiment directory written by `run`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{ensure, Context};

use crate::config::{ControllerKind, ExperimentConfig};
use crate::experiment::{
    error_at, final_second_error, run_path, summarize, summary_csv, ControllerTiming, RunIndexEntry, RunResult,
};
use crate::io;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerMetrics {
    pub controller: String,
    pub complete_runs: usize,
    pub failed_runs: usize,
    pub final_second_error: Option<f64>,
    pub error_at_end: Option<f64>,
    pub median_episode_s: Option<f64>,
    pub solve_mean_us: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub config: ExperimentConfig,
    /// Whether `summary.csv` matches a recomputation from `runs/*.csv`.
    pub summary_consistent: bool,
    pub metrics: Vec<ControllerMetrics>,
}

/// Reloads every run log, recomputes the summary and collects per-controller
/// metrics.
pub fn analyze(dir: &Path) -> anyhow::Result<Report> {
    let config: ExperimentConfig = io::read_json(&dir.join("config.json"))?;
    let index: Vec<RunIndexEntry> = io::read_json(&dir.join("runs").join("index.json"))?;
    let timing: BTreeMap<String, ControllerTiming> = io::read_json(&dir.join("timing.json"))?;
    let mut results: BTreeMap<ControllerKind, Vec<RunResult>> = BTreeMap::new();
    for e in &index {
        let kind = ControllerKind::from_name(&e.controller)
            .with_context(|| format!("unknown controller {:?} in index", e.controller))?;
        let (name, steps) = io::read_run_csv(&run_path(dir, &e.controller, e.run))?;
        ensure!(name == e.controller, "run log controller {name:?} does not match index");
        results.entry(kind).or_default().push(RunResult {
            controller: name,
            run: e.run,
            x0: e.x0.clone(),
            steps,
            failure: e.failure.clone(),
            episode_seconds: f64::NAN,
        });
    }
    let recomputed = summary_csv(&summarize(&results, config.steps, config.dt))?;
    let on_disk = std::fs::read(dir.join("summary.csv")).context("reading summary.csv")?;
    let summary_consistent = recomputed == on_disk;

    let mut metrics = Vec::new();
    for (kind, runs) in &results {
        let complete: Vec<&RunResult> = runs.iter().filter(|r| r.is_complete(config.steps)).collect();
        let avg = if complete.is_empty() {
            None
        } else {
            Some(crate::experiment::average_error(&complete)?)
        };
        let t = timing.get(kind.name());
        metrics.push(ControllerMetrics {
            controller: kind.name().to_string(),
            complete_runs: complete.len(),
            failed_runs: runs.len() - complete.len(),
            final_second_error: avg.as_ref().map(|a| final_second_error(a, config.dt)),
            error_at_end: avg.as_ref().map(|a| error_at(a, config.dt, config.steps as f64 * config.dt)),
            median_episode_s: t.and_then(|t| t.median_s),
            solve_mean_us: t.and_then(|t| t.solve_mean_us),
        });
    }
    Ok(Report {
        config,
        summary_consistent,
        metrics,
    })
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.prec$e}"))
}

pub fn render(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "steps {} dt {:.4} runs {} | summary.csv {}",
        r.config.steps,
        r.config.dt,
        r.config.runs,
        if r.summary_consistent { "consistent" } else { "MISMATCH" }
    );
    let _ = writeln!(
        s,
        "{:<18} {:>8} {:>7} {:>14} {:>14} {:>12} {:>12}",
        "controller", "complete", "failed", "last-second", "final", "episode s", "solve us"
    );
    for m in &r.metrics {
        let _ = writeln!(
            s,
            "{:<18} {:>8} {:>7} {:>14} {:>14} {:>12} {:>12}",
            m.controller,
            m.complete_runs,
            m.failed_runs,
            opt(m.final_second_error, 3),
            opt(m.error_at_end, 3),
            m.median_episode_s.map_or("-".into(), |v| format!("{v:.4}")),
            m.solve_mean_us.map_or("-".into(), |v| format!("{v:.0}")),
        );
    }
    let by: BTreeMap<&str, &ControllerMetrics> = r.metrics.iter().map(|m| (m.controller.as_str(), m)).collect();
    if let Some(base) = by.get("nominal").and_then(|m| m.median_episode_s) {
        for (name, m) in &by {
            if let Some(t) = m.median_episode_s {
                let _ = writeln!(s, "episode time {name} / nominal = {:.3}", t / base);
            }
        }
    }
    s
}
