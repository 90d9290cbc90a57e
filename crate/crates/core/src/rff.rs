//! Residual-learning baseline: random Fourier features fitted online by
//! recursive least squares, controlled by iLQR on `f_known + W φ([x; u])`.

use alloc::string::ToString;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::controller::{decision, ControlDecision, Controller, Observation};
use crate::dynamics::DiscreteDynamics;
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::mpc::{ilqr_solve, IlqrSettings, MpcSolution, QuadraticCostSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RffConfig {
    pub features: usize,
    /// Gaussian-kernel bandwidth. Non-positive means "use the median heuristic".
    pub bandwidth: f64,
    pub forgetting: f64,
    /// Initial covariance scale `P₀ = p0 · I`.
    pub p0: f64,
    pub seed: u64,
}

impl Default for RffConfig {
    fn default() -> Self {
        Self {
            features: 256,
            bandwidth: 0.0,
            forgetting: 0.999,
            p0: 100.0,
            seed: 0,
        }
    }
}

/// Random Fourier feature regressor `r̂(z) = W φ(z)` with RLS state.
#[derive(Debug, Clone, PartialEq)]
pub struct RffModel {
    pub omega: Matrix,
    pub phase: Vec<f64>,
    pub weights: Matrix,
    pub covariance: Matrix,
    pub forgetting: f64,
    pub p0: f64,
    /// Number of times the covariance lost definiteness and was reset.
    pub resets: usize,
}

impl RffModel {
    /// Draws `Ω ~ N(0, σ⁻² I)` and `b ~ U[0, 2π)`; `W = 0`, `P = p0 I`.
    pub fn new(input_dim: usize, output_dim: usize, features: usize, bandwidth: f64, forgetting: f64, p0: f64, seed: u64) -> Result<Self> {
        if features == 0 || input_dim == 0 {
            return Err(Error::InvalidArgument("feature and input counts must be positive".to_string()));
        }
        if !(bandwidth > 0.0) {
            return Err(Error::InvalidArgument("bandwidth must be positive".to_string()));
        }
        if !(forgetting > 0.0 && forgetting <= 1.0) || !(p0 > 0.0) {
            return Err(Error::InvalidArgument(
                "forgetting factor must lie in (0, 1] and p0 must be positive".to_string(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut omega = Matrix::zeros(features, input_dim);
        for w in omega.data_mut() {
            let s: f64 = rng.sample(StandardNormal);
            *w = s / bandwidth;
        }
        let phase = (0..features)
            .map(|_| rng.random_range(0.0..core::f64::consts::TAU))
            .collect();
        let mut covariance = Matrix::identity(features);
        covariance.data_mut().iter_mut().for_each(|v| *v *= p0);
        Ok(Self {
            omega,
            phase,
            weights: Matrix::zeros(output_dim, features),
            covariance,
            forgetting,
            p0,
            resets: 0,
        })
    }

    pub fn from_config(input_dim: usize, output_dim: usize, cfg: &RffConfig) -> Result<Self> {
        Self::new(input_dim, output_dim, cfg.features, cfg.bandwidth, cfg.forgetting, cfg.p0, cfg.seed)
    }

    pub fn feature_count(&self) -> usize {
        self.phase.len()
    }

    pub fn input_dim(&self) -> usize {
        self.omega.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    /// `φ(z) = √(2/D) cos(Ω z + b)`.
    pub fn features(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("RffModel::features", self.input_dim(), z.len())?;
        let scale = libm::sqrt(2.0 / self.feature_count() as f64);
        Ok((0..self.feature_count())
            .map(|i| scale * libm::cos(dot(self.omega.row(i), z) + self.phase[i]))
            .collect())
    }

    pub fn predict(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.weights.matvec(&self.features(z)?)
    }

    fn reset_covariance(&mut self) {
        self.covariance = Matrix::identity(self.feature_count());
        let p0 = self.p0;
        self.covariance.data_mut().iter_mut().for_each(|v| *v *= p0);
        self.resets += 1;
    }

    /// Rank-one recursive least-squares update toward `target ≈ W φ(z)`.
    ///
    /// All outputs share the regressor, so one covariance serves every row of `W`.
    pub fn rls_update(&mut self, z: &[f64], target: &[f64]) -> Result<()> {
        check_len("RffModel::rls_update target", self.output_dim(), target.len())?;
        let phi = self.features(z)?;
        let p_phi = self.covariance.matvec(&phi)?;
        let denom = self.forgetting + dot(&phi, &p_phi);
        if !(denom > 0.0) || !denom.is_finite() {
            self.reset_covariance();
            return Ok(());
        }
        let gain: Vec<f64> = p_phi.iter().map(|v| v / denom).collect();
        let pred = self.weights.matvec(&phi)?;
        for (i, (t, p)) in target.iter().zip(&pred).enumerate() {
            let e = t - p;
            crate::linalg::axpy(e, &gain, self.weights.row_mut(i));
        }
        let d = self.feature_count();
        let inv_lambda = 1.0 / self.forgetting;
        for i in 0..d {
            let row = self.covariance.row_mut(i);
            for j in 0..d {
                row[j] = (row[j] - gain[i] * p_phi[j]) * inv_lambda;
            }
        }
        self.covariance.symmetrize();
        let healthy = (0..d).all(|i| {
            let v = self.covariance[(i, i)];
            v > 0.0 && v.is_finite()
        });
        if !healthy || !self.weights.is_finite() {
            self.reset_covariance();
            if !self.weights.is_finite() {
                return Err(Error::NonFinite("RLS weights"));
            }
        }
        Ok(())
    }
}

/// Median pairwise Euclidean distance of the given points.
pub fn median_heuristic(points: &[Vec<f64>]) -> Result<f64> {
    let mut dists = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            dists.push(crate::linalg::norm(&crate::linalg::sub_vec(&points[i], &points[j])));
        }
    }
    if dists.is_empty() {
        return Err(Error::InvalidArgument("median heuristic needs at least two points".to_string()));
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let med = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if med > 0.0 {
        Ok(med)
    } else {
        Err(Error::InvalidArgument("points are not distinct".to_string()))
    }
}

/// `f_known(x, u) + W φ([x; u])`.
pub struct ResidualAugmented<'a, D: ?Sized> {
    pub base: &'a D,
    pub residual: &'a RffModel,
}

impl<D: DiscreteDynamics + ?Sized> DiscreteDynamics for ResidualAugmented<'_, D> {
    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.base.input_dim()
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.base.step(x, u)?;
        let z = [x, u].concat();
        for (o, r) in out.iter_mut().zip(self.residual.predict(&z)?) {
            *o += r;
        }
        Ok(out)
    }
}

/// First input of iLQR on the residual-augmented nominal model.
pub fn rff_mpc_step<D: DiscreteDynamics + ?Sized>(
    x: &[f64],
    model: &RffModel,
    nominal: &D,
    cost: &QuadraticCostSpec,
    warm_start: Option<&[Vec<f64>]>,
    settings: &IlqrSettings,
) -> Result<MpcSolution> {
    let aug = ResidualAugmented {
        base: nominal,
        residual: model,
    };
    ilqr_solve(&aug, x, cost, warm_start, settings)
}

/// RFF-MPC controller with online RLS on the residual `x⁺ − f_known(x, u)`.
#[derive(Debug, Clone)]
pub struct RffMpc<D> {
    pub nominal: D,
    pub model: RffModel,
    pub cost: QuadraticCostSpec,
    pub settings: IlqrSettings,
    warm: Option<Vec<Vec<f64>>>,
}

impl<D: DiscreteDynamics> RffMpc<D> {
    pub fn new(nominal: D, model: RffModel, cost: QuadraticCostSpec, settings: IlqrSettings) -> Result<Self> {
        check_len(
            "RffMpc feature input",
            nominal.state_dim() + nominal.input_dim(),
            model.input_dim(),
        )?;
        check_len("RffMpc residual output", nominal.state_dim(), model.output_dim())?;
        Ok(Self {
            nominal,
            model,
            cost,
            settings,
            warm: None,
        })
    }
}

impl<D: DiscreteDynamics> Controller for RffMpc<D> {
    fn name(&self) -> &'static str {
        "rff"
    }

    fn act(&mut self, x: &[f64]) -> Result<ControlDecision> {
        let sol = rff_mpc_step(x, &self.model, &self.nominal, &self.cost, self.warm.as_deref(), &self.settings)?;
        self.warm = Some(sol.shifted_inputs());
        Ok(decision(&sol))
    }

    fn observe(&mut self, x: &[f64], u: &[f64], x_next: &[f64]) -> Result<Observation> {
        let pred = self.nominal.step(x, u)?;
        let residual: Vec<f64> = x_next.iter().zip(&pred).map(|(a, b)| a - b).collect();
        self.model.rls_update(&[x, u].concat(), &residual)?;
        Ok(Observation::default())
    }
}
