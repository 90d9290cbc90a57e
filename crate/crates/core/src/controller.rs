//! Closed-loop controller interface and the two non-adaptive controllers.

use alloc::vec::Vec;

use crate::dynamics::DiscreteDynamics;
use crate::embedding::EmbeddingModel;
use crate::error::Result;
use crate::mpc::{ilqr_solve, IlqrSettings, KoopmanMpc, MpcSolution, QuadraticCostSpec};

/// What a controller decided at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl ControlDecision {
    fn from_solution(sol: &MpcSolution) -> Self {
        Self {
            u: sol.first_input().to_vec(),
            iterations: sol.diagnostics.iterations,
            kkt_residual: sol.diagnostics.kkt_residual,
        }
    }
}

/// Learning diagnostics after observing a transition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observation {
    /// Batch loss of the last gradient step, if any.
    pub loss: Option<f64>,
    /// `‖A_target − A_main‖_F` for target-network controllers.
    pub target_gap: Option<f64>,
}

/// A receding-horizon controller driven one step at a time.
pub trait Controller {
    fn name(&self) -> &'static str;

    /// Input to apply at state `x`.
    fn act(&mut self, x: &[f64]) -> Result<ControlDecision>;

    /// Feeds back the observed transition `(x, u, x_next)`.
    fn observe(&mut self, _x: &[f64], _u: &[f64], _x_next: &[f64]) -> Result<Observation> {
        Ok(Observation::default())
    }
}

/// Nonlinear MPC on a known model, solved by iLQR with shifted warm starts.
#[derive(Debug, Clone)]
pub struct NominalMpc<D> {
    pub model: D,
    pub cost: QuadraticCostSpec,
    pub settings: IlqrSettings,
    warm: Option<Vec<Vec<f64>>>,
}

impl<D: DiscreteDynamics> NominalMpc<D> {
    pub fn new(model: D, cost: QuadraticCostSpec, settings: IlqrSettings) -> Self {
        Self {
            model,
            cost,
            settings,
            warm: None,
        }
    }

    pub fn solve(&mut self, x: &[f64]) -> Result<MpcSolution> {
        let sol = ilqr_solve(&self.model, x, &self.cost, self.warm.as_deref(), &self.settings)?;
        self.warm = Some(sol.shifted_inputs());
        Ok(sol)
    }
}

impl<D: DiscreteDynamics> Controller for NominalMpc<D> {
    fn name(&self) -> &'static str {
        "nominal"
    }

    fn act(&mut self, x: &[f64]) -> Result<ControlDecision> {
        Ok(ControlDecision::from_solution(&self.solve(x)?))
    }
}

/// Koopman MPC with a fixed embedding model.
#[derive(Debug, Clone)]
pub struct FrozenKoopmanMpc {
    pub model: EmbeddingModel,
    pub mpc: KoopmanMpc,
}

impl FrozenKoopmanMpc {
    pub fn new(model: EmbeddingModel, cost: QuadraticCostSpec) -> Self {
        Self {
            model,
            mpc: KoopmanMpc::new(cost),
        }
    }
}

impl Controller for FrozenKoopmanMpc {
    fn name(&self) -> &'static str {
        "koopman"
    }

    fn act(&mut self, x: &[f64]) -> Result<ControlDecision> {
        Ok(ControlDecision::from_solution(&self.mpc.solve(&self.model, x)?))
    }
}

pub(crate) fn decision(sol: &MpcSolution) -> ControlDecision {
    ControlDecision::from_solution(sol)
}
