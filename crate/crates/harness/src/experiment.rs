//! Closed-loop experiments: prior construction, controller wiring, episodes,
//! error metrics, timing and the parameter sweep.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context};
use koopman_adapt_core::dynamics::scale_params;
use koopman_adapt_core::rff::median_heuristic;
use koopman_adapt_core::training::{
    dataset_trajectory, initial_state, mean_prediction_error, train_offline,
};
use koopman_adapt_core::{
    AdaptiveKoopmanMpc, Cartpole, CartpoleParams, Controller, Dataset, DiscreteDynamics, EmbeddingModel,
    FrozenKoopmanMpc, NominalMpc, RffModel, RffMpc,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{seeds, ControllerKind, ExperimentConfig};
use crate::io::{self, Checkpoint, ValidationReport};

/// One logged step. Row `k` holds the state `x_k` at `t = k·dt` and the
/// decision taken there; the final row `k = steps` has no decision.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Option<f64>,
    /// `‖x_k − x_ref‖₂`.
    pub error: f64,
    pub loss: Option<f64>,
    pub a_gap: Option<f64>,
    pub solve_us: Option<u64>,
    pub iterations: Option<usize>,
    pub kkt: Option<f64>,
    /// `ok`, `end`, or `failed: <reason>`.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub controller: String,
    pub run: usize,
    pub x0: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub failure: Option<String>,
    /// Wall time of the whole closed loop.
    pub episode_seconds: f64,
}

impl RunResult {
    pub fn errors(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.error).collect()
    }

    pub fn solve_times_us(&self) -> Vec<u64> {
        self.steps.iter().filter_map(|s| s.solve_us).collect()
    }

    pub fn is_complete(&self, steps: usize) -> bool {
        self.failure.is_none() && self.steps.len() == steps + 1
    }
}

fn state_error(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Closed loop on `plant` for `steps` steps from `x0`.
pub fn run_episode(
    plant: &Cartpole,
    controller: &mut dyn Controller,
    x0: &[f64],
    steps: usize,
    run: usize,
) -> RunResult {
    let mut out = RunResult {
        controller: controller.name().to_string(),
        run,
        x0: x0.to_vec(),
        steps: Vec::with_capacity(steps + 1),
        failure: None,
        episode_seconds: 0.0,
    };
    let dt = plant.dt;
    let mut x = x0.to_vec();
    let start = Instant::now();
    for k in 0..=steps {
        let mut rec = StepRecord {
            k,
            t: k as f64 * dt,
            x: x.clone(),
            u: None,
            error: state_error(&x),
            loss: None,
            a_gap: None,
            solve_us: None,
            iterations: None,
            kkt: None,
            status: "end".into(),
        };
        if k == steps {
            out.steps.push(rec);
            break;
        }
        let solve_start = Instant::now();
        let decision = controller.act(&x);
        rec.solve_us = Some(solve_start.elapsed().as_micros() as u64);
        let step = decision.map_err(anyhow::Error::from).and_then(|d| {
            rec.u = Some(d.u[0]);
            rec.iterations = Some(d.iterations);
            rec.kkt = Some(d.kkt_residual);
            let next = plant.step(&x, &d.u)?;
            let obs = controller.observe(&x, &d.u, &next)?;
            rec.loss = obs.loss;
            rec.a_gap = obs.target_gap;
            Ok(next)
        });
        match step {
            Ok(next) => {
                rec.status = "ok".into();
                out.steps.push(rec);
                x = next;
            }
            Err(e) => {
                let msg = format!("failed: {e}");
                rec.status = msg.clone();
                out.steps.push(rec);
                out.failure = Some(msg);
                break;
            }
        }
    }
    out.episode_seconds = start.elapsed().as_secs_f64();
    out
}

/// Elementwise mean of the error series.
pub fn average_error(results: &[&RunResult]) -> anyhow::Result<Vec<f64>> {
    let first = results.first().context("no runs to average")?;
    let len = first.steps.len();
    ensure!(results.iter().all(|r| r.steps.len() == len), "runs have different lengths");
    let mut avg = vec![0.0; len];
    for r in results {
        for (a, s) in avg.iter_mut().zip(&r.steps) {
            *a += s.error;
        }
    }
    let m = results.len() as f64;
    avg.iter_mut().for_each(|a| *a /= m);
    Ok(avg)
}

/// Mean of the series over `t ∈ (t_end − 1 s, t_end]`.
pub fn final_second_error(series: &[f64], dt: f64) -> f64 {
    let per_second = (1.0 / dt).round() as usize;
    let tail = &series[series.len().saturating_sub(per_second)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Series value at the step nearest to time `t`.
pub fn error_at(series: &[f64], dt: f64, t: f64) -> f64 {
    let k = ((t / dt).round() as usize).min(series.len() - 1);
    series[k]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub controller: String,
    pub k: usize,
    pub t: f64,
    pub average_error: f64,
    pub runs: usize,
}

/// Per-step average over the complete runs of each controller.
pub fn summarize(results: &BTreeMap<ControllerKind, Vec<RunResult>>, steps: usize, dt: f64) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (kind, runs) in results {
        let complete: Vec<&RunResult> = runs.iter().filter(|r| r.is_complete(steps)).collect();
        if complete.is_empty() {
            continue;
        }
        let avg = average_error(&complete).expect("complete runs share a length");
        for (k, a) in avg.into_iter().enumerate() {
            rows.push(SummaryRow {
                controller: kind.name().to_string(),
                k,
                t: k as f64 * dt,
                average_error: a,
                runs: complete.len(),
            });
        }
    }
    rows
}

pub fn summary_csv(rows: &[SummaryRow]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["controller", "k", "t", "average_error", "runs"])?;
    for r in rows {
        w.write_record([
            r.controller.clone(),
            r.k.to_string(),
            io::fmt_f64(r.t),
            io::fmt_f64(r.average_error),
            r.runs.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerTiming {
    pub episodes: usize,
    pub episode_seconds: Vec<f64>,
    pub mean_s: Option<f64>,
    pub std_s: Option<f64>,
    pub median_s: Option<f64>,
    pub solves: usize,
    pub solve_mean_us: Option<f64>,
    pub solve_std_us: Option<f64>,
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (Some(m), Some(var.sqrt()))
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// Episode and per-solve wall time per controller.
pub fn timing_report(results: &[&RunResult]) -> ControllerTiming {
    let episodes: Vec<f64> = results.iter().map(|r| r.episode_seconds).collect();
    let solves: Vec<f64> = results
        .iter()
        .flat_map(|r| r.solve_times_us())
        .map(|v| v as f64)
        .collect();
    let (mean_s, std_s) = mean_std(&episodes);
    let (solve_mean_us, solve_std_us) = mean_std(&solves);
    ControllerTiming {
        episodes: episodes.len(),
        median_s: median(&episodes),
        episode_seconds: episodes,
        mean_s,
        std_s,
        solves: solves.len(),
        solve_mean_us,
        solve_std_us,
    }
}

/// Nominal closed-loop data with the trajectories solved in parallel.
///
/// A trajectory whose pole angle ever exceeds `offline.max_angle` is
/// skipped like one whose solver failed. Otherwise equal to the sequential
/// generator for the same arguments.
pub fn generate_dataset_parallel(
    nominal: &Cartpole,
    cfg: &ExperimentConfig,
    n_traj: usize,
    traj_len: usize,
    seed: u64,
    excitation: f64,
) -> anyhow::Result<Dataset> {
    ensure!(n_traj > 0 && traj_len > 0, "trajectory count and length must be positive");
    let cost = cfg.cost()?;
    let trajs: Vec<_> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let t = dataset_trajectory(nominal, &cost, traj_len, &cfg.initial_states, seed, i, &cfg.ilqr, excitation)?;
            let fell = t.iter().any(|s| s.y[2].abs() > cfg.offline.max_angle);
            Ok::<_, anyhow::Error>((!fell).then_some(t))
        })
        .collect();
    let mut data = Dataset::empty(seed, n_traj, traj_len);
    for (i, t) in trajs.into_iter().enumerate() {
        match t {
            Ok(Some(t)) => data.trajectories.push(t),
            _ => data.meta.skipped.push(i),
        }
    }
    Ok(data)
}

pub fn nominal_plant(cfg: &ExperimentConfig) -> Cartpole {
    plant_with(cfg, cfg.nominal)
}

pub fn plant_with(cfg: &ExperimentConfig, params: CartpoleParams) -> Cartpole {
    Cartpole {
        params,
        dt: cfg.dt,
        force_limit: cfg.force_limit,
    }
}

/// Outcome of offline training.
#[derive(Debug, Clone)]
pub struct OfflineOutcome {
    pub checkpoint: Checkpoint,
    pub dataset: Dataset,
    pub train_seconds: f64,
    pub generation_seconds: f64,
}

/// Generates the nominal dataset, trains the prior and evaluates it on the
/// held-out trajectories.
pub fn train_prior(cfg: &ExperimentConfig) -> anyhow::Result<OfflineOutcome> {
    let nominal = nominal_plant(cfg);
    let t0 = Instant::now();
    let data = generate_dataset_parallel(
        &nominal,
        cfg,
        cfg.offline.trajectories,
        cfg.offline.length,
        cfg.derived_seed(seeds::DATASET),
        cfg.offline.excitation,
    )?;
    let generation_seconds = t0.elapsed().as_secs_f64();
    ensure!(!data.is_empty(), "every generated trajectory failed");
    let (train, val) = data.split_by_trajectory(cfg.offline.validation_fraction, cfg.derived_seed(seeds::SPLIT));
    let mut tcfg = cfg.offline.train.clone();
    tcfg.seed = cfg.derived_seed(seeds::TRAINING);
    let t1 = Instant::now();
    let trained = train_offline(&train, &tcfg)?;
    let train_seconds = t1.elapsed().as_secs_f64();
    let validation = if val.is_empty() {
        None
    } else {
        let v = val.flattened();
        let untrained = EmbeddingModel::with_identity_dynamics(trained.initial.network.clone(), trained.model.input_dim)?;
        Some(ValidationReport {
            trained: mean_prediction_error(&trained.model, &v)?,
            least_squares_start: mean_prediction_error(&trained.initial, &v)?,
            untrained: mean_prediction_error(&untrained, &v)?,
        })
    };
    Ok(OfflineOutcome {
        checkpoint: Checkpoint::new(trained.model, trained.epoch_losses, validation),
        dataset: data,
        train_seconds,
        generation_seconds,
    })
}

/// Everything shared by the episodes of one experiment.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub prior: Option<Checkpoint>,
    pub rff_bandwidth: Option<f64>,
}

impl Experiment {
    /// Loads or trains the prior when a Koopman controller is selected, and
    /// fixes the RFF bandwidth when the RFF controller is selected.
    pub fn prepare(cfg: ExperimentConfig) -> anyhow::Result<Self> {
        cfg.validate()?;
        let out = cfg.output_dir.clone();
        let prior = if cfg.controllers.iter().any(|k| k.needs_prior()) {
            Some(load_or_train_prior(&cfg, &out)?)
        } else {
            None
        };
        let rff_bandwidth = if cfg.controllers.contains(&ControllerKind::Rff) {
            Some(if cfg.rff.bandwidth > 0.0 {
                cfg.rff.bandwidth
            } else {
                rff_bandwidth(&cfg)?
            })
        } else {
            None
        };
        Ok(Self {
            cfg,
            prior,
            rff_bandwidth,
        })
    }

    pub fn initial_state(&self, run: usize) -> Vec<f64> {
        initial_state(&self.cfg.initial_states, self.cfg.derived_seed(seeds::EVALUATION), run)
    }

    pub fn controller(&self, kind: ControllerKind, run: usize) -> anyhow::Result<Box<dyn Controller>> {
        let cfg = &self.cfg;
        let cost = cfg.cost()?;
        let prior = || -> anyhow::Result<EmbeddingModel> {
            Ok(self.prior.as_ref().context("Koopman controller without a prior")?.model.clone())
        };
        Ok(match kind {
            ControllerKind::Nominal => Box::new(NominalMpc::new(nominal_plant(cfg), cost, cfg.ilqr)),
            ControllerKind::Koopman => Box::new(FrozenKoopmanMpc::new(prior()?, cost)),
            ControllerKind::AdaptiveKoopman => {
                let mut a = cfg.adaptation.clone();
                a.seed = cfg.derived_seed(seeds::ADAPTATION).wrapping_add(run as u64);
                Box::new(AdaptiveKoopmanMpc::new(prior()?, cost, a)?)
            }
            ControllerKind::Rff => {
                let mut r = cfg.rff;
                r.bandwidth = self.rff_bandwidth.context("RFF bandwidth not prepared")?;
                r.seed = cfg.derived_seed(seeds::RFF);
                let model = RffModel::from_config(5, 4, &r)?;
                Box::new(RffMpc::new(nominal_plant(cfg), model, cost, cfg.ilqr)?)
            }
        })
    }

    /// All selected controllers for all runs on a plant with `true_params`.
    /// Episodes run sequentially so that wall times are comparable.
    pub fn run(&self, true_params: CartpoleParams) -> anyhow::Result<BTreeMap<ControllerKind, Vec<RunResult>>> {
        let plant = plant_with(&self.cfg, true_params);
        let mut results: BTreeMap<ControllerKind, Vec<RunResult>> = BTreeMap::new();
        for run in 0..self.cfg.runs {
            let x0 = self.initial_state(run);
            for &kind in &self.cfg.controllers {
                let mut c = self.controller(kind, run)?;
                let r = run_episode(&plant, c.as_mut(), &x0, self.cfg.steps, run);
                results.entry(kind).or_default().push(r);
            }
        }
        Ok(results)
    }

    /// Runs and writes `config.json`, `runs/*.csv`, `runs/index.json`,
    /// `summary.csv` and `timing.json` under `dir`.
    pub fn run_and_write(&self, true_params: CartpoleParams, dir: &Path) -> anyhow::Result<RunOutput> {
        let results = self.run(true_params)?;
        let mut resolved = self.cfg.clone();
        resolved.true_plant = true_params;
        resolved.output_dir = dir.to_path_buf();
        io::write_json(&dir.join("config.json"), &resolved)?;
        let mut index = Vec::new();
        for runs in results.values() {
            for r in runs {
                io::write_run_csv(&run_path(dir, &r.controller, r.run), r)?;
                index.push(RunIndexEntry {
                    controller: r.controller.clone(),
                    run: r.run,
                    x0: r.x0.clone(),
                    failure: r.failure.clone(),
                });
            }
        }
        io::write_json(&dir.join("runs").join("index.json"), &index)?;
        let summary = summarize(&results, self.cfg.steps, self.cfg.dt);
        io::write_atomic(&dir.join("summary.csv"), &summary_csv(&summary)?)?;
        let timing: BTreeMap<String, ControllerTiming> = results
            .iter()
            .map(|(k, v)| (k.name().to_string(), timing_report(&v.iter().collect::<Vec<_>>())))
            .collect();
        io::write_json(&dir.join("timing.json"), &timing)?;
        Ok(RunOutput {
            results,
            summary,
            timing,
        })
    }
}

pub struct RunOutput {
    pub results: BTreeMap<ControllerKind, Vec<RunResult>>,
    pub summary: Vec<SummaryRow>,
    pub timing: BTreeMap<String, ControllerTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunIndexEntry {
    pub controller: String,
    pub run: usize,
    pub x0: Vec<f64>,
    pub failure: Option<String>,
}

pub fn run_path(dir: &Path, controller: &str, run: usize) -> PathBuf {
    dir.join("runs").join(format!("{controller}_{run:02}.csv"))
}

/// Default checkpoint location inside an output directory.
pub fn default_checkpoint(out: &Path) -> PathBuf {
    out.join("prior.json")
}

fn load_or_train_prior(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<Checkpoint> {
    let path = cfg.checkpoint.clone().unwrap_or_else(|| default_checkpoint(out));
    if path.exists() {
        return Checkpoint::load(&path).with_context(|| format!("loading prior {}", path.display()));
    }
    let outcome = train_prior(cfg)?;
    io::write_dataset(&out.join("dataset"), &outcome.dataset)?;
    io::write_json(&path, &outcome.checkpoint)?;
    Ok(outcome.checkpoint)
}

/// Median pairwise distance of `[x; u]` over a nominal closed-loop subsample.
pub fn rff_bandwidth(cfg: &ExperimentConfig) -> anyhow::Result<f64> {
    let len = cfg.offline.length.max(1);
    let n_traj = cfg.rff_bandwidth_samples.div_ceil(len).max(2);
    let data = generate_dataset_parallel(&nominal_plant(cfg), cfg, n_traj, len, cfg.derived_seed(seeds::RFF), 0.0)?;
    let points: Vec<Vec<f64>> = data
        .transitions()
        .take(cfg.rff_bandwidth_samples.max(2))
        .map(|t| [t.x.as_slice(), t.u.as_slice()].concat())
        .collect();
    Ok(median_heuristic(&points)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub pct: f64,
    pub controller: String,
    pub final_error: f64,
    pub final_second_error: f64,
    pub runs: usize,
}

/// True plant at `nominal · (1 + pct)` for each percentage; one full
/// experiment per entry under `dir/pct_<pct>`.
pub fn sensitivity_sweep(exp: &Experiment, pcts: &[f64], dir: &Path) -> anyhow::Result<Vec<SweepRow>> {
    if pcts.is_empty() {
        bail!("empty percentage list");
    }
    let mut rows = Vec::new();
    for &pct in pcts {
        let params = scale_params(&exp.cfg.nominal, pct);
        let sub = dir.join(format!("pct_{pct:.2}"));
        let out = exp.run_and_write(params, &sub)?;
        let mut by_controller: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &out.summary {
            by_controller.entry(r.controller.as_str()).or_default().push(r.average_error);
            counts.insert(r.controller.as_str(), r.runs);
        }
        for (c, series) in by_controller {
            rows.push(SweepRow {
                pct,
                controller: c.to_string(),
                final_error: *series.last().unwrap(),
                final_second_error: final_second_error(&series, exp.cfg.dt),
                runs: counts[c],
            });
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["pct", "controller", "final_error", "final_second_error", "runs"])?;
    for r in &rows {
        w.write_record([
            io::fmt_f64(r.pct),
            r.controller.clone(),
            io::fmt_f64(r.final_error),
            io::fmt_f64(r.final_second_error),
            r.runs.to_string(),
        ])?;
    }
    io::write_atomic(&dir.join("sweep_summary.csv"), &w.into_inner()?)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(errors: &[f64]) -> RunResult {
        RunResult {
            controller: "x".into(),
            run: 0,
            x0: vec![0.0; 4],
            steps: errors
                .iter()
                .enumerate()
                .map(|(k, e)| StepRecord {
                    k,
                    t: k as f64,
                    x: vec![*e, 0.0, 0.0, 0.0],
                    u: None,
                    error: *e,
                    loss: None,
                    a_gap: None,
                    solve_us: Some(10),
                    iterations: None,
                    kkt: None,
                    status: "ok".into(),
                })
                .collect(),
            failure: None,
            episode_seconds: 1.0,
        }
    }

    #[test]
    fn average_error_examples() {
        let zero = synthetic(&[0.0; 5]);
        assert_eq!(average_error(&[&zero, &zero]).unwrap(), vec![0.0; 5]);
        let one = synthetic(&[1.0, 2.0]);
        assert_eq!(average_error(&[&one]).unwrap(), vec![1.0, 2.0]);
        let a = synthetic(&[1.0; 4]);
        let b = synthetic(&[3.0; 4]);
        assert_eq!(average_error(&[&a, &b]).unwrap(), vec![2.0; 4]);
        assert!(average_error(&[&a, &one]).is_err());
        assert!(average_error(&[]).is_err());
    }

    #[test]
    fn timing_with_no_solves_is_empty_not_a_crash() {
        let t = timing_report(&[]);
        assert_eq!(t.episodes, 0);
        assert_eq!(t.median_s, None);
        assert_eq!(t.solve_mean_us, None);
        let r = synthetic(&[1.0, 1.0]);
        let t = timing_report(&[&r]);
        assert_eq!(t.solves, 2);
        assert_eq!(t.median_s, Some(1.0));
    }

    #[test]
    fn final_second_and_pointwise_errors() {
        let series: Vec<f64> = (0..=90).map(|k| k as f64).collect();
        let dt = 1.0 / 15.0;
        assert_eq!(error_at(&series, dt, 1.0), 15.0);
        assert_eq!(error_at(&series, dt, 6.0), 90.0);
        assert_eq!(final_second_error(&series, dt), (76..=90).sum::<usize>() as f64 / 15.0);
    }

    #[test]
    fn equilibrium_episode_has_zero_error() {
        let cfg = ExperimentConfig {
            runs: 1,
            steps: 10,
            ..Default::default()
        };
        let plant = plant_with(&cfg, cfg.nominal);
        let mut c = NominalMpc::new(plant, cfg.cost().unwrap(), cfg.ilqr);
        let r = run_episode(&plant, &mut c, &[0.0; 4], 10, 0);
        assert_eq!(r.steps.len(), 11);
        assert!(r.failure.is_none());
        assert!(r.errors().iter().all(|e| *e < 1e-12));
        assert_eq!(r.steps.last().unwrap().status, "end");
    }

    #[test]
    fn parallel_generation_matches_sequential() {
        let cfg = ExperimentConfig::default();
        let plant = nominal_plant(&cfg);
        let par = generate_dataset_parallel(&plant, &cfg, 3, 5, 11, 0.0).unwrap();
        let seq = koopman_adapt_core::training::generate_dataset(
            &plant,
            &cfg.cost().unwrap(),
            3,
            5,
            &cfg.initial_states,
            11,
            &cfg.ilqr,
        )
        .unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn trajectories_beyond_the_angle_limit_are_skipped() {
        let mut cfg = ExperimentConfig::default();
        let plant = nominal_plant(&cfg);
        let kept = generate_dataset_parallel(&plant, &cfg, 4, 5, 3, 0.0).unwrap();
        assert_eq!(kept.trajectories.len(), 4);
        assert!(kept.meta.skipped.is_empty());
        cfg.offline.max_angle = 1e-9;
        let none = generate_dataset_parallel(&plant, &cfg, 4, 5, 3, 0.0).unwrap();
        assert!(none.is_empty());
        assert_eq!(none.meta.skipped, vec![0, 1, 2, 3]);
    }
}
