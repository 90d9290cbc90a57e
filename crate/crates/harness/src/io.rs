//! File formats: dataset CSV + metadata, model checkpoints, per-run step
//! logs, and atomic writes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use koopman_adapt_core::training::DatasetMeta;
use koopman_adapt_core::{Dataset, EmbeddingModel, Transition};
use serde::{Deserialize, Serialize};

use crate::experiment::{RunResult, StepRecord};

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse_opt(s: &str) -> anyhow::Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        Ok(Some(s.parse().with_context(|| format!("bad number {s:?}"))?))
    }
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFileMeta {
    #[serde(flatten)]
    pub meta: DatasetMeta,
    /// Rows per stored trajectory, in file order.
    pub trajectory_lengths: Vec<usize>,
    pub columns: Vec<String>,
}

const STATE_DIM: usize = 4;

fn dataset_columns() -> Vec<String> {
    let mut c: Vec<String> = (1..=STATE_DIM).map(|i| format!("x{i}")).collect();
    c.push("u".into());
    c.extend((1..=STATE_DIM).map(|i| format!("y{i}")));
    c
}

/// `<stem>.csv` with columns `x1..x4,u,y1..y4` and `<stem>.json` metadata.
pub fn write_dataset(stem: &Path, data: &Dataset) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(dataset_columns())?;
    for t in data.transitions() {
        ensure!(t.x.len() == STATE_DIM && t.u.len() == 1, "dataset rows must be cartpole transitions");
        let row: Vec<String> = t.x.iter().chain(&t.u).chain(&t.y).map(|v| fmt_f64(*v)).collect();
        w.write_record(row)?;
    }
    write_atomic(&stem.with_extension("csv"), &w.into_inner()?)?;
    let meta = DatasetFileMeta {
        meta: data.meta.clone(),
        trajectory_lengths: data.trajectories.iter().map(Vec::len).collect(),
        columns: dataset_columns(),
    };
    write_json(&stem.with_extension("json"), &meta)
}

pub fn read_dataset(stem: &Path) -> anyhow::Result<Dataset> {
    let meta: DatasetFileMeta = read_json(&stem.with_extension("json"))?;
    let mut r = csv::Reader::from_path(stem.with_extension("csv"))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        ensure!(rec.len() == 2 * STATE_DIM + 1, "dataset row has {} fields", rec.len());
        let v: Vec<f64> = rec.iter().map(|s| s.parse::<f64>()).collect::<Result<_, _>>()?;
        rows.push(Transition::new(
            v[..STATE_DIM].to_vec(),
            v[STATE_DIM..STATE_DIM + 1].to_vec(),
            v[STATE_DIM + 1..].to_vec(),
        ));
    }
    let total: usize = meta.trajectory_lengths.iter().sum();
    ensure!(total == rows.len(), "metadata lists {total} rows, file has {}", rows.len());
    let mut it = rows.into_iter();
    let trajectories = meta
        .trajectory_lengths
        .iter()
        .map(|&n| it.by_ref().take(n).collect())
        .collect();
    Ok(Dataset {
        trajectories,
        meta: meta.meta,
    })
}

/// Prior model plus how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub state_dim: usize,
    pub input_dim: usize,
    pub lifted_dim: usize,
    pub model: EmbeddingModel,
    #[serde(default)]
    pub epoch_losses: Vec<f64>,
    #[serde(default)]
    pub validation: Option<ValidationReport>,
}

/// Mean one-step state prediction errors on held-out nominal data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub trained: f64,
    /// Initial features with least-squares `[A B]`.
    pub least_squares_start: f64,
    /// Initial features with `A = I`, `B = 0`.
    pub untrained: f64,
}

impl Checkpoint {
    pub fn new(model: EmbeddingModel, epoch_losses: Vec<f64>, validation: Option<ValidationReport>) -> Self {
        Self {
            state_dim: model.state_dim,
            input_dim: model.input_dim,
            lifted_dim: model.lifted_dim(),
            model,
            epoch_losses,
            validation,
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let c: Self = read_json(path)?;
        c.model.validate()?;
        if c.lifted_dim != c.model.lifted_dim() || c.state_dim != c.model.state_dim {
            bail!("checkpoint header does not match the stored model");
        }
        Ok(c)
    }
}

pub const RUN_COLUMNS: [&str; 15] = [
    "controller", "k", "t", "x1", "x2", "x3", "x4", "u", "error", "loss", "a_gap", "solve_us", "iterations", "kkt",
    "status",
];

/// One row per logged step; see [`StepRecord`].
pub fn write_run_csv(path: &Path, run: &RunResult) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RUN_COLUMNS)?;
    for s in &run.steps {
        let mut row = vec![run.controller.clone(), s.k.to_string(), fmt_f64(s.t)];
        row.extend(s.x.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_opt(s.u));
        row.push(fmt_f64(s.error));
        row.push(fmt_opt(s.loss));
        row.push(fmt_opt(s.a_gap));
        row.push(s.solve_us.map(|v| v.to_string()).unwrap_or_default());
        row.push(s.iterations.map(|v| v.to_string()).unwrap_or_default());
        row.push(fmt_opt(s.kkt));
        row.push(s.status.clone());
        w.write_record(row)?;
    }
    write_atomic(path, &w.into_inner()?)
}

/// Reads a step log back. Wall-clock columns are kept; everything else is exact.
pub fn read_run_csv(path: &Path) -> anyhow::Result<(String, Vec<StepRecord>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = r.headers()?.clone();
    ensure!(header.iter().eq(RUN_COLUMNS.iter().copied()), "unexpected columns in {}", path.display());
    let mut controller = String::new();
    let mut steps = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        controller = rec[0].to_string();
        let f = |i: usize| -> anyhow::Result<f64> { Ok(rec[i].parse()?) };
        steps.push(StepRecord {
            k: rec[1].parse()?,
            t: f(2)?,
            x: vec![f(3)?, f(4)?, f(5)?, f(6)?],
            u: parse_opt(&rec[7])?,
            error: f(8)?,
            loss: parse_opt(&rec[9])?,
            a_gap: parse_opt(&rec[10])?,
            solve_us: if rec[11].is_empty() { None } else { Some(rec[11].parse()?) },
            iterations: if rec[12].is_empty() { None } else { Some(rec[12].parse()?) },
            kkt: parse_opt(&rec[13])?,
            status: rec[14].to_string(),
        });
    }
    Ok((controller, steps))
}
