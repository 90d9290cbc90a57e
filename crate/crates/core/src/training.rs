//! Offline phase: nominal-MPC data generation and joint fitting of the
//! feature network and the linear operators.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::DiscreteDynamics;
use crate::embedding::{EmbeddingModel, LossWeights, ParamMask};
use crate::error::{Error, Result};
use crate::linalg::{solve_linear_least_squares, Matrix};
use crate::mpc::{ilqr_solve, IlqrSettings, QuadraticCostSpec};
use crate::nn::{Activation, FeatureNetwork};
use crate::optim::{AdamConfig, OptimizerState};

/// One observed step `(x, u, y)` with `y` the successor of `x` under `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

impl Transition {
    pub fn new(x: Vec<f64>, u: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, u, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.u).chain(&self.y).all(|v| v.is_finite())
    }
}

/// Axis-aligned box for uniform initial-state sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSampler {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl BoxSampler {
    /// `[−1,1] m × [−0.5,0.5] m/s × [−0.4,0.4] rad × [−0.5,0.5] rad/s`.
    pub fn cartpole_default() -> Self {
        Self {
            low: vec![-1.0, -0.5, -0.4, -0.5],
            high: vec![1.0, 0.5, 0.4, 0.5],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(lo, hi)| if hi > lo { rng.random_range(*lo..*hi) } else { *lo })
            .collect()
    }
}

/// Independent RNG stream `stream` derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub requested_trajectories: usize,
    pub trajectory_length: usize,
    /// Indices of trajectories dropped (solver failure or angle filter).
    pub skipped: Vec<usize>,
}

/// Transitions grouped by the trajectory that produced them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub trajectories: Vec<Vec<Transition>>,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// No trajectories yet; metadata for a requested generation run.
    pub fn empty(seed: u64, requested_trajectories: usize, trajectory_length: usize) -> Self {
        Self {
            trajectories: Vec::with_capacity(requested_trajectories),
            meta: DatasetMeta {
                seed,
                requested_trajectories,
                trajectory_length,
                skipped: Vec::new(),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.trajectories.iter().flatten()
    }

    pub fn flattened(&self) -> Vec<Transition> {
        self.transitions().cloned().collect()
    }

    /// Splits whole trajectories into `(train, validation)`; the validation
    /// part gets `round(fraction * count)` trajectories chosen by `seed`.
    pub fn split_by_trajectory(&self, validation_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.trajectories.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = libm::round(validation_fraction * idx.len() as f64) as usize;
        let n_val = n_val.min(idx.len());
        let mut val_idx = idx[..n_val].to_vec();
        let mut train_idx = idx[n_val..].to_vec();
        val_idx.sort_unstable();
        train_idx.sort_unstable();
        let pick = |ids: &[usize]| Dataset {
            trajectories: ids.iter().map(|&i| self.trajectories[i].clone()).collect(),
            meta: self.meta.clone(),
        };
        (pick(&train_idx), pick(&val_idx))
    }
}

/// Rolls out one trajectory of the nominal plant under nominal MPC.
///
/// The solver is warm-started with the shifted previous solution.
pub fn generate_trajectory<D: DiscreteDynamics + ?Sized>(
    nominal: &D,
    cost: &QuadraticCostSpec,
    x0: Vec<f64>,
    length: usize,
    settings: &IlqrSettings,
) -> Result<Vec<Transition>> {
    generate_trajectory_excited(nominal, cost, x0, length, settings, 0.0, &mut stream_rng(0, 0))
}

/// As [`generate_trajectory`], but adds a uniform perturbation in
/// `[-excitation, excitation]` to every MPC input. The perturbed input is the
/// one applied and recorded.
///
/// Closed-loop MPC data alone has `u ≈ -K x`, which leaves the input
/// response of a fitted linear model poorly determined.
pub fn generate_trajectory_excited<D: DiscreteDynamics + ?Sized, R: Rng + ?Sized>(
    nominal: &D,
    cost: &QuadraticCostSpec,
    x0: Vec<f64>,
    length: usize,
    settings: &IlqrSettings,
    excitation: f64,
    rng: &mut R,
) -> Result<Vec<Transition>> {
    check_excitation(excitation)?;
    let mut out = Vec::with_capacity(length);
    let mut x = x0;
    let mut warm: Option<Vec<Vec<f64>>> = None;
    for _ in 0..length {
        let sol = ilqr_solve(nominal, &x, cost, warm.as_deref(), settings)?;
        let mut u = sol.first_input().to_vec();
        if excitation > 0.0 {
            for ui in &mut u {
                *ui += rng.random_range(-excitation..=excitation);
            }
        }
        let y = nominal.step(&x, &u)?;
        warm = Some(sol.shifted_inputs());
        out.push(Transition::new(x, u, y.clone()));
        x = y;
    }
    Ok(out)
}

fn check_excitation(excitation: f64) -> Result<()> {
    if excitation >= 0.0 && excitation.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument("excitation must be finite and non-negative".to_string()))
    }
}

/// Trajectory `index` of a dataset: the initial state and the excitation
/// both come from RNG stream `index` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn dataset_trajectory<D: DiscreteDynamics + ?Sized>(
    nominal: &D,
    cost: &QuadraticCostSpec,
    traj_len: usize,
    sampler: &BoxSampler,
    seed: u64,
    index: usize,
    settings: &IlqrSettings,
    excitation: f64,
) -> Result<Vec<Transition>> {
    let mut rng = stream_rng(seed, index as u64);
    let x0 = sampler.sample(&mut rng);
    generate_trajectory_excited(nominal, cost, x0, traj_len, settings, excitation, &mut rng)
}

/// Dataset of `n_traj` nominal closed-loop trajectories of `traj_len` steps.
///
/// Trajectory `i` draws its initial state from RNG stream `i` of `seed`, so
/// the result does not depend on generation order. Trajectories whose solver
/// fails are skipped and listed in the metadata.
pub fn generate_dataset<D: DiscreteDynamics + ?Sized>(
    nominal: &D,
    cost: &QuadraticCostSpec,
    n_traj: usize,
    traj_len: usize,
    sampler: &BoxSampler,
    seed: u64,
    settings: &IlqrSettings,
) -> Result<Dataset> {
    generate_dataset_excited(nominal, cost, n_traj, traj_len, sampler, seed, settings, 0.0)
}

/// [`generate_dataset`] with input excitation, see [`generate_trajectory_excited`].
#[allow(clippy::too_many_arguments)]
pub fn generate_dataset_excited<D: DiscreteDynamics + ?Sized>(
    nominal: &D,
    cost: &QuadraticCostSpec,
    n_traj: usize,
    traj_len: usize,
    sampler: &BoxSampler,
    seed: u64,
    settings: &IlqrSettings,
    excitation: f64,
) -> Result<Dataset> {
    if n_traj == 0 || traj_len == 0 {
        return Err(Error::InvalidArgument(
            "trajectory count and length must be positive".to_string(),
        ));
    }
    check_excitation(excitation)?;
    let mut data = Dataset::empty(seed, n_traj, traj_len);
    for i in 0..n_traj {
        match dataset_trajectory(nominal, cost, traj_len, sampler, seed, i, settings, excitation) {
            Ok(t) => data.trajectories.push(t),
            Err(_) => data.meta.skipped.push(i),
        }
    }
    Ok(data)
}

/// Initial state of trajectory `index` for a given master seed.
pub fn initial_state(sampler: &BoxSampler, seed: u64, index: usize) -> Vec<f64> {
    sampler.sample(&mut stream_rng(seed, index as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OfflineTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub loss: LossWeights,
    pub seed: u64,
    /// Learned feature count; the lifted dimension is `n + n_learned`.
    pub n_learned: usize,
    pub hidden: Vec<usize>,
    /// Ridge used for the least-squares fits of `[A B]`.
    pub init_ridge: f64,
    /// Learning-rate multiplier applied after every epoch.
    pub lr_decay: f64,
    /// Re-fit `[A B]` by least squares on the final features.
    pub refit_operators: bool,
}

impl Default for OfflineTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            optimizer: AdamConfig::default(),
            loss: LossWeights::default(),
            seed: 0,
            n_learned: 2,
            hidden: vec![64, 64, 64],
            init_ridge: 1e-10,
            lr_decay: 1.0,
            refit_operators: true,
        }
    }
}

impl OfflineTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".to_string()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidArgument("lr_decay must lie in (0, 1]".to_string()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".to_string()));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: EmbeddingModel,
    /// Model before gradient descent: random features with least-squares `[A B]`.
    pub initial: EmbeddingModel,
    /// Mean per-sample loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Least-squares fit of `[A B]` for the current features:
/// `min Σ ‖A g(x) + B u − g(y)‖²`.
pub fn fit_linear_operators(model: &mut EmbeddingModel, data: &[Transition], ridge: f64) -> Result<()> {
    let lifted = model.lifted_dim();
    let p = model.input_dim;
    let mut phi = Matrix::zeros(data.len(), lifted + p);
    let mut target = Matrix::zeros(data.len(), lifted);
    for (i, t) in data.iter().enumerate() {
        let gx = model.embed(&t.x)?;
        let gy = model.embed(&t.y)?;
        phi.row_mut(i)[..lifted].copy_from_slice(&gx);
        phi.row_mut(i)[lifted..].copy_from_slice(&t.u);
        target.row_mut(i).copy_from_slice(&gy);
    }
    let w = solve_linear_least_squares(&phi, &target, ridge)?;
    let wt = w.transpose();
    model.a = wt.block(0, 0, lifted, lifted);
    model.b = wt.block(0, lifted, lifted, p);
    Ok(())
}

/// Fits features and operators to `data`.
///
/// Features are initialized randomly from `cfg.seed`, `[A B]` by least
/// squares on those features, then all of `θ, A, B` descend the embedding
/// loss over shuffled mini-batches. `C` stays `[I 0]`. Optionally `[A B]`
/// is re-fitted on the final features.
pub fn train_offline(data: &Dataset, cfg: &OfflineTrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let samples = data.flattened();
    let first = samples.first().ok_or(Error::EmptyBatch)?;
    let n = first.x.len();
    let p = first.u.len();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut widths = vec![n];
    widths.extend(&cfg.hidden);
    widths.push(cfg.n_learned);
    let network = FeatureNetwork::random(&widths, Activation::Tanh, &mut rng)?;
    let mut model = EmbeddingModel::with_identity_dynamics(network, p)?;
    fit_linear_operators(&mut model, &samples, cfg.init_ridge)?;
    let initial = model.clone();

    let mut optimizer = OptimizerState::new(cfg.optimizer);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i].clone()));
            let (loss, grads) = model
                .loss_and_gradients(&batch, cfg.loss, ParamMask::ALL)
                .map_err(|_| Error::NonFiniteLoss { epoch, batch: b })?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            total += loss;
            let g = grads.tensors();
            optimizer.step(&mut model.trainable_tensors_mut(ParamMask::ALL), &g)?;
        }
        epoch_losses.push(total / samples.len() as f64);
        optimizer.config.learning_rate *= cfg.lr_decay;
    }
    // For fixed features every row of [A B] is an independent least-squares
    // problem, whatever the loss weights, so this is the exact minimizer.
    if cfg.refit_operators {
        fit_linear_operators(&mut model, &samples, cfg.init_ridge)?;
    }
    model.validate()?;
    Ok(TrainedModel {
        model,
        initial,
        epoch_losses,
    })
}

/// Mean Euclidean one-step state prediction error over `data`.
pub fn mean_prediction_error(model: &EmbeddingModel, data: &[Transition]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut acc = 0.0;
    for t in data {
        let pred = model.predict_state(&t.x, &t.u)?;
        acc += crate::linalg::norm(&crate::linalg::sub_vec(&pred, &t.y));
    }
    Ok(acc / data.len() as f64)
}
