//! Online adaptation: replay buffer, main/target model pair with soft
//! updates, and the adaptive Koopman MPC loop built on them.
//!
//! Each control step acts with the target model, stores the observed
//! transition, takes masked gradient steps on the main model, and moves the
//! target toward the main model by `τ`.

use alloc::collections::VecDeque;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{decision, ControlDecision, Controller, Observation};
use crate::dynamics::DiscreteDynamics;
use crate::embedding::{EmbeddingModel, LossWeights, ParamMask};
use crate::error::{check_len, Error, Result};
use crate::mpc::{KoopmanMpc, MpcSolution, QuadraticCostSpec};
use crate::optim::{AdamConfig, OptimizerState};
use crate::training::Transition;

/// Bounded FIFO of transitions with seeded uniform batch sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("buffer capacity must be positive".to_string()));
        }
        Ok(Self {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    /// `min(size, len)` distinct entries drawn uniformly at random.
    pub fn sample(&mut self, size: usize) -> Result<Vec<Transition>> {
        if self.items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let amount = size.min(self.items.len());
        Ok(index::sample(&mut self.rng, self.items.len(), amount)
            .into_iter()
            .map(|i| self.items[i].clone())
            .collect())
    }
}

/// Main model `Θ` and the slowly moving target `Θ_target`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPair {
    pub main: EmbeddingModel,
    pub target: EmbeddingModel,
}

impl TargetPair {
    /// Both members start from the prior.
    pub fn new(prior: EmbeddingModel) -> Self {
        Self {
            main: prior.clone(),
            target: prior,
        }
    }

    /// `Θ_target ← τ Θ + (1 − τ) Θ_target` for every tensor, including `C`.
    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidArgument("soft-update rate must lie in [0, 1]".to_string()));
        }
        let main = self.main.tensors();
        let mut target = self.target.tensors_mut();
        check_len("soft_update tensor count", main.len(), target.len())?;
        for (t, m) in target.iter_mut().zip(&main) {
            check_len("soft_update tensor", m.len(), t.len())?;
        }
        for (t, m) in target.iter_mut().zip(main) {
            for (ti, mi) in t.iter_mut().zip(m) {
                *ti = tau * mi + (1.0 - tau) * *ti;
            }
        }
        Ok(())
    }

    /// `‖A_target − A‖_F`.
    pub fn operator_gap(&self) -> f64 {
        self.target
            .a
            .sub(&self.main.a)
            .map(|d| d.frobenius_norm())
            .unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationConfig {
    pub tau: f64,
    pub batch_size: usize,
    pub gradient_steps: usize,
    pub mask: ParamMask,
    pub buffer_capacity: usize,
    pub optimizer: AdamConfig,
    pub loss: LossWeights,
    pub seed: u64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            batch_size: 64,
            gradient_steps: 1,
            mask: ParamMask::FREEZE_A,
            buffer_capacity: 10_000,
            optimizer: AdamConfig::default(),
            loss: LossWeights::default(),
            seed: 0,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidArgument("tau must lie in [0, 1]".to_string()));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(Error::InvalidArgument(
                "batch size and buffer capacity must be positive".to_string(),
            ));
        }
        self.loss.validate()
    }
}

/// Diagnostics of one adaptive control step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptStepReport {
    pub u: Vec<f64>,
    pub next_state: Vec<f64>,
    pub loss: Option<f64>,
    pub target_gap: f64,
    pub solution: MpcSolution,
}

/// Adaptive Koopman MPC with soft target updates.
#[derive(Debug, Clone)]
pub struct AdaptiveKoopmanMpc {
    pub pair: TargetPair,
    pub buffer: ReplayBuffer,
    pub config: AdaptationConfig,
    pub mpc: KoopmanMpc,
    optimizer: OptimizerState,
}

impl AdaptiveKoopmanMpc {
    /// Starts from the offline prior with fresh optimizer moments.
    pub fn new(prior: EmbeddingModel, cost: QuadraticCostSpec, config: AdaptationConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            pair: TargetPair::new(prior),
            buffer: ReplayBuffer::new(config.buffer_capacity, config.seed)?,
            optimizer: OptimizerState::new(config.optimizer),
            mpc: KoopmanMpc::new(cost),
            config,
        })
    }

    /// Solves Koopman MPC with the target model.
    pub fn plan(&self, x: &[f64]) -> Result<MpcSolution> {
        self.mpc.solve(&self.pair.target, x)
    }

    /// Stores the transition, trains the main model and soft-updates the target.
    pub fn learn(&mut self, t: Transition) -> Result<Observation> {
        if !t.is_finite() {
            return Err(Error::NonFinite("observed transition"));
        }
        self.buffer.push(t);
        let mut last_loss = None;
        if !self.config.mask.is_empty() {
            for _ in 0..self.config.gradient_steps {
                let batch = self.buffer.sample(self.config.batch_size)?;
                let (loss, grads) = self
                    .pair
                    .main
                    .loss_and_gradients(&batch, self.config.loss, self.config.mask)?;
                let g = grads.tensors();
                self.optimizer
                    .step(&mut self.pair.main.trainable_tensors_mut(self.config.mask), &g)?;
                last_loss = Some(loss);
            }
        }
        self.pair.soft_update(self.config.tau)?;
        Ok(Observation {
            loss: last_loss,
            target_gap: Some(self.pair.operator_gap()),
        })
    }

    /// Act with the target model, step the true plant, then learn.
    pub fn adapt_step<P: DiscreteDynamics + ?Sized>(&mut self, x: &[f64], plant: &P) -> Result<AdaptStepReport> {
        let solution = self.plan(x)?;
        let u = solution.first_input().to_vec();
        let next_state = plant.step(x, &u)?;
        let obs = self.learn(Transition::new(x.to_vec(), u.clone(), next_state.clone()))?;
        Ok(AdaptStepReport {
            u,
            next_state,
            loss: obs.loss,
            target_gap: obs.target_gap.unwrap_or(f64::NAN),
            solution,
        })
    }
}

impl Controller for AdaptiveKoopmanMpc {
    fn name(&self) -> &'static str {
        "adaptive_koopman"
    }

    fn act(&mut self, x: &[f64]) -> Result<ControlDecision> {
        Ok(decision(&self.plan(x)?))
    }

    fn observe(&mut self, x: &[f64], u: &[f64], x_next: &[f64]) -> Result<Observation> {
        self.learn(Transition::new(x.to_vec(), u.to_vec(), x_next.to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, FeatureNetwork};
    use alloc::vec;

    fn t(i: usize) -> Transition {
        Transition::new(vec![i as f64], vec![0.0], vec![0.0])
    }

    #[test]
    fn buffer_is_fifo_and_bounded() {
        let mut b = ReplayBuffer::new(3, 0).unwrap();
        for i in 0..5 {
            b.push(t(i));
            assert!(b.len() <= 3);
        }
        let xs: Vec<f64> = b.iter().map(|t| t.x[0]).collect();
        assert_eq!(xs, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sampling_rules() {
        let mut b = ReplayBuffer::new(10, 1).unwrap();
        assert_eq!(b.sample(4), Err(Error::EmptyBuffer));
        b.push(t(7));
        assert_eq!(b.sample(4).unwrap(), vec![t(7)]);
        for i in 0..4 {
            b.push(t(i));
        }
        let mut all: Vec<f64> = b.sample(100).unwrap().iter().map(|t| t.x[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, vec![0.0, 1.0, 2.0, 3.0, 7.0]);
    }

    fn small_model(seed: u64) -> EmbeddingModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = FeatureNetwork::random(&[2, 3, 1], Activation::Tanh, &mut rng).unwrap();
        let mut m = EmbeddingModel::with_identity_dynamics(net, 1).unwrap();
        m.b[(0, 0)] = 0.5;
        m
    }

    #[test]
    fn soft_update_endpoints() {
        let mut pair = TargetPair::new(small_model(1));
        pair.main = small_model(2);
        let before = pair.target.clone();
        pair.soft_update(0.0).unwrap();
        assert_eq!(pair.target, before);
        pair.soft_update(1.0).unwrap();
        assert_eq!(pair.target, pair.main);
        assert!(pair.soft_update(1.5).is_err());
    }

    #[test]
    fn soft_update_scalar_arithmetic() {
        let mut pair = TargetPair::new(small_model(1));
        pair.main.b[(0, 0)] = 1.0;
        pair.target.b[(0, 0)] = 0.0;
        pair.soft_update(0.05).unwrap();
        assert_eq!(pair.target.b[(0, 0)], 0.05);
    }
}
