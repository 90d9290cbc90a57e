//! Experiment configuration. Every field has a default, so `{}` is a valid
//! config describing the reference cartpole benchmark.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use koopman_adapt_core::training::BoxSampler;
use koopman_adapt_core::{
    AdaptationConfig, CartpoleParams, IlqrSettings, Matrix, OfflineTrainConfig, QuadraticCostSpec, RffConfig,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Nominal,
    Koopman,
    AdaptiveKoopman,
    Rff,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Nominal,
        ControllerKind::Koopman,
        ControllerKind::AdaptiveKoopman,
        ControllerKind::Rff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Nominal => "nominal",
            ControllerKind::Koopman => "koopman",
            ControllerKind::AdaptiveKoopman => "adaptive_koopman",
            ControllerKind::Rff => "rff",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn needs_prior(self) -> bool {
        matches!(self, ControllerKind::Koopman | ControllerKind::AdaptiveKoopman)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineConfig {
    pub trajectories: usize,
    pub length: usize,
    /// Fraction of trajectories held out for validation.
    pub validation_fraction: f64,
    /// Half-width of the uniform perturbation added to generated inputs.
    pub excitation: f64,
    /// Trajectories with `|θ|` above this are discarded.
    pub max_angle: f64,
    pub train: OfflineTrainConfig,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            trajectories: 500,
            length: 60,
            validation_fraction: 0.1,
            excitation: 2.0,
            max_angle: std::f64::consts::FRAC_PI_2,
            train: OfflineTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub nominal: CartpoleParams,
    pub true_plant: CartpoleParams,
    pub dt: f64,
    /// Closed-loop steps per episode.
    pub steps: usize,
    pub horizon: usize,
    /// Diagonal of `Q_state`.
    pub q_state: Vec<f64>,
    /// Diagonal of `R`.
    pub r: Vec<f64>,
    pub controllers: Vec<ControllerKind>,
    pub runs: usize,
    /// Master seed; every RNG in an experiment is derived from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Initial states for both data generation and evaluation.
    pub initial_states: BoxSampler,
    pub ilqr: IlqrSettings,
    /// Optional symmetric clip on the force applied to the plant.
    pub force_limit: Option<f64>,
    pub offline: OfflineConfig,
    /// Prior model checkpoint; trained and written here when missing.
    pub checkpoint: Option<PathBuf>,
    pub adaptation: AdaptationConfig,
    pub rff: RffConfig,
    /// Nominal transitions used for the RFF median-heuristic bandwidth.
    pub rff_bandwidth_samples: usize,
    pub sweep_pcts: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            nominal: CartpoleParams::nominal(),
            true_plant: CartpoleParams::true_plant(),
            dt: 1.0 / 15.0,
            steps: 90,
            horizon: 20,
            q_state: vec![5.0, 0.1, 5.0, 0.1],
            r: vec![0.1],
            controllers: ControllerKind::ALL.to_vec(),
            runs: 10,
            seed: 0,
            output_dir: PathBuf::from("out"),
            initial_states: BoxSampler::cartpole_default(),
            ilqr: IlqrSettings::default(),
            force_limit: None,
            offline: OfflineConfig::default(),
            checkpoint: None,
            adaptation: AdaptationConfig::default(),
            rff: RffConfig::default(),
            rff_bandwidth_samples: 400,
            sweep_pcts: vec![0.1, 0.2, 0.3],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.steps == 0 || self.runs == 0 {
            bail!("steps and runs must be at least 1");
        }
        if !(self.dt > 0.0) {
            bail!("dt must be positive");
        }
        if self.q_state.len() != 4 || self.r.len() != 1 {
            bail!("q_state needs 4 diagonal entries and r needs 1");
        }
        if self.controllers.is_empty() {
            bail!("no controllers selected");
        }
        if !(0.0..1.0).contains(&self.offline.validation_fraction) {
            bail!("validation_fraction must lie in [0, 1)");
        }
        if !(self.offline.excitation >= 0.0 && self.offline.excitation.is_finite()) {
            bail!("excitation must be finite and non-negative");
        }
        if !(self.offline.max_angle > 0.0) {
            bail!("max_angle must be positive");
        }
        if self.sweep_pcts.iter().any(|p| !(*p >= 0.0)) {
            bail!("sweep percentages must be non-negative");
        }
        self.nominal.validate()?;
        self.true_plant.validate()?;
        self.adaptation.validate()?;
        self.offline.train.validate()?;
        self.cost()?;
        Ok(())
    }

    /// Regulation to `x_ref = 0` over the configured horizon.
    pub fn cost(&self) -> anyhow::Result<QuadraticCostSpec> {
        Ok(QuadraticCostSpec::regulate(
            self.horizon,
            Matrix::from_diag(&self.q_state),
            Matrix::from_diag(&self.r),
        )?)
    }

    /// Independent sub-seed for one purpose of the experiment.
    pub fn derived_seed(&self, purpose: u64) -> u64 {
        splitmix64(self.seed ^ splitmix64(purpose))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed purposes.
pub mod seeds {
    pub const DATASET: u64 = 1;
    pub const TRAINING: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const EVALUATION: u64 = 4;
    pub const ADAPTATION: u64 = 5;
    pub const RFF: u64 = 6;
}
