//! Receding-horizon solvers.
//!
//! Both solvers minimize
//! `Σ_{k=0}^{H+1} (x_k − r_k)ᵀ Q (x_k − r_k) + Σ_{k=0}^{H} u_kᵀ R u_k`
//! over `u_0 … u_H`. The `k = H+1` term tracks the state only because no
//! `u_{H+1}` is decided.
//!
//! [`solve_lq_tracking`] handles linear dynamics with a backward affine
//! Riccati recursion; [`ilqr_solve`] handles smooth nonlinear dynamics by
//! repeated linearization around the current rollout.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::{rollout, DiscreteDynamics};
use crate::embedding::EmbeddingModel;
use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, dot, norm, quad_form, sub_vec, Matrix};

/// Horizon, weights and reference for a tracking objective in the original state space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCostSpec {
    pub horizon: usize,
    pub q_state: Matrix,
    pub r: Matrix,
    /// `x_ref_0 … x_ref_{H+1}`.
    pub reference: Vec<Vec<f64>>,
}

impl QuadraticCostSpec {
    pub fn new(horizon: usize, q_state: Matrix, r: Matrix, reference: Vec<Vec<f64>>) -> Result<Self> {
        let spec = Self {
            horizon,
            q_state,
            r,
            reference,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Regulation to the origin.
    pub fn regulate(horizon: usize, q_state: Matrix, r: Matrix) -> Result<Self> {
        let n = q_state.rows();
        Self::new(horizon, q_state, r, vec![vec![0.0; n]; horizon + 2])
    }

    pub fn state_dim(&self) -> usize {
        self.q_state.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.r.rows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".to_string()));
        }
        check_symmetric_pd(&self.q_state, "Q_state")?;
        check_symmetric_pd(&self.r, "R")?;
        check_len("reference length", self.horizon + 2, self.reference.len())?;
        for r in &self.reference {
            check_len("reference entry", self.state_dim(), r.len())?;
        }
        Ok(())
    }

    /// Objective value of a state trajectory (`H+2` states) and inputs (`H+1`).
    pub fn objective(&self, states: &[Vec<f64>], inputs: &[Vec<f64>]) -> f64 {
        tracking_objective(&self.q_state, &self.r, &self.reference, states, inputs, None)
    }
}

fn check_symmetric_pd(m: &Matrix, what: &'static str) -> Result<()> {
    if !m.is_symmetric(1e-12) {
        return Err(Error::NotSymmetric(what));
    }
    m.cholesky().map(|_| ()).map_err(|_| Error::NotPositiveDefinite(what))
}

fn check_symmetric_psd(m: &Matrix, what: &'static str) -> Result<()> {
    if !m.is_symmetric(1e-12) {
        return Err(Error::NotSymmetric(what));
    }
    let mut shifted = m.clone();
    shifted.add_diag(1e-10 * (1.0 + m.max_abs()));
    shifted
        .cholesky()
        .map(|_| ())
        .map_err(|_| Error::NotPositiveDefinite(what))
}

fn tracking_objective(
    q: &Matrix,
    r: &Matrix,
    x_ref: &[Vec<f64>],
    states: &[Vec<f64>],
    inputs: &[Vec<f64>],
    u_ref: Option<&[Vec<f64>]>,
) -> f64 {
    let mut j = 0.0;
    for (x, xr) in states.iter().zip(x_ref) {
        j += quad_form(q, &sub_vec(x, xr));
    }
    for (k, u) in inputs.iter().enumerate() {
        j += match u_ref {
            Some(w) => quad_form(r, &sub_vec(u, &w[k])),
            None => quad_form(r, u),
        };
    }
    j
}

/// Linear tracking problem in the lifted space.
#[derive(Debug, Clone, PartialEq)]
pub struct LqTrackingProblem {
    pub a: Matrix,
    pub b: Matrix,
    /// Positive semidefinite state weight.
    pub q: Matrix,
    /// Positive definite input weight.
    pub r: Matrix,
    pub x0: Vec<f64>,
    /// `H+2` references, one per predicted state including the current one.
    pub reference: Vec<Vec<f64>>,
}

impl LqTrackingProblem {
    /// Horizon `H`; the problem decides `H+1` inputs.
    pub fn horizon(&self) -> usize {
        self.reference.len().saturating_sub(2)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.rows();
        check_len("LQ A cols", n, self.a.cols())?;
        check_len("LQ B rows", n, self.b.rows())?;
        check_len("LQ Q rows", n, self.q.rows())?;
        check_len("LQ R rows", self.b.cols(), self.r.rows())?;
        check_len("LQ x0", n, self.x0.len())?;
        if self.reference.len() < 2 {
            return Err(Error::InvalidArgument(
                "reference must cover at least the current and one predicted state".to_string(),
            ));
        }
        for r in &self.reference {
            check_len("LQ reference", n, r.len())?;
        }
        check_symmetric_psd(&self.q, "Q")?;
        check_symmetric_pd(&self.r, "R")?;
        Ok(())
    }

    pub fn objective(&self, states: &[Vec<f64>], inputs: &[Vec<f64>]) -> f64 {
        tracking_objective(&self.q, &self.r, &self.reference, states, inputs, None)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    /// Norm of the objective gradient with respect to the stacked inputs.
    pub kkt_residual: f64,
    /// Accepted objective values, starting with the initial guess.
    pub cost_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// `u_0 … u_H`.
    pub inputs: Vec<Vec<f64>>,
    /// `x_0 … x_{H+1}` under the control model.
    pub trajectory: Vec<Vec<f64>>,
    pub objective: f64,
    pub diagnostics: SolverDiagnostics,
}

impl MpcSolution {
    pub fn first_input(&self) -> &[f64] {
        &self.inputs[0]
    }

    /// Warm start for the next receding-horizon call.
    pub fn shifted_inputs(&self) -> Vec<Vec<f64>> {
        shift_inputs(&self.inputs)
    }
}

/// Drops the first input and repeats the last one.
pub fn shift_inputs(inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if inputs.is_empty() {
        return Vec::new();
    }
    let mut out: Vec<Vec<f64>> = inputs[1..].to_vec();
    out.push(inputs[inputs.len() - 1].clone());
    out
}

/// Affine feedback `u_k = K_k x_k + k_k`.
#[derive(Debug, Clone)]
struct StageGain {
    k_fb: Matrix,
    k_ff: Vec<f64>,
}

/// Inputs to one backward sweep over `k = H … 0` for
/// `x_{k+1} = A_k x_k + B_k u_k + c_k`.
struct AffineLq<'a> {
    stages: usize,
    dynamics: &'a dyn Fn(usize) -> (&'a Matrix, &'a Matrix),
    offsets: Option<&'a [Vec<f64>]>,
    q: &'a Matrix,
    r: &'a Matrix,
    x_ref: &'a [Vec<f64>],
    u_ref: Option<&'a [Vec<f64>]>,
    input_regularization: f64,
}

impl AffineLq<'_> {
    fn backward(&self) -> Result<Vec<StageGain>> {
        let h1 = self.stages;
        let mut p = self.q.clone();
        let mut q_vec: Vec<f64> = self.q.matvec(&self.x_ref[h1])?.iter().map(|v| -v).collect();
        let mut gains = Vec::with_capacity(h1);
        for k in (0..h1).rev() {
            let (a, b) = (self.dynamics)(k);
            let pa = p.matmul(a)?;
            let pb = p.matmul(b)?;
            // next-stage linear term including the affine offset
            let mut lin = q_vec.clone();
            if let Some(c) = self.offsets {
                axpy(1.0, &p.matvec(&c[k])?, &mut lin);
            }
            let mut huu_raw = b.tr_matmul(&pb)?;
            huu_raw.add_scaled(1.0, self.r)?;
            huu_raw.symmetrize();
            let mut huu = huu_raw.clone();
            huu.add_diag(self.input_regularization);
            let hux = b.tr_matmul(&pa)?;
            let mut hu = b.tr_matvec(&lin)?;
            if let Some(w) = self.u_ref {
                let rw = self.r.matvec(&w[k])?;
                axpy(-1.0, &rw, &mut hu);
            }
            let chol = huu.cholesky().map_err(|_| Error::NotPositiveDefinite("input Hessian"))?;
            let k_fb = chol.solve_mat(&hux)?.scale(-1.0);
            let k_ff: Vec<f64> = chol.solve_vec(&hu)?.iter().map(|v| -v).collect();

            // V_xx = Q + AᵀPA + KᵀHuu K + KᵀHux + HuxᵀK
            let mut p_new = a.tr_matmul(&pa)?;
            p_new.add_scaled(1.0, self.q)?;
            let huu_k = huu_raw.matmul(&k_fb)?;
            p_new.add_scaled(1.0, &k_fb.tr_matmul(&huu_k)?)?;
            let kt_hux = k_fb.tr_matmul(&hux)?;
            p_new.add_scaled(1.0, &kt_hux)?;
            p_new.add_scaled(1.0, &kt_hux.transpose())?;
            p_new.symmetrize();

            // v_x = −Q r + Aᵀ lin + KᵀHuu k + Kᵀ hu + Huxᵀ k
            let mut q_new: Vec<f64> = self.q.matvec(&self.x_ref[k])?.iter().map(|v| -v).collect();
            axpy(1.0, &a.tr_matvec(&lin)?, &mut q_new);
            axpy(1.0, &k_fb.tr_matvec(&huu_raw.matvec(&k_ff)?)?, &mut q_new);
            axpy(1.0, &k_fb.tr_matvec(&hu)?, &mut q_new);
            axpy(1.0, &hux.tr_matvec(&k_ff)?, &mut q_new);

            if !p_new.is_finite() || q_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("Riccati iterate"));
            }
            p = p_new;
            q_vec = q_new;
            gains.push(StageGain { k_fb, k_ff });
        }
        gains.reverse();
        Ok(gains)
    }

    /// Gradient of the objective with respect to each `u_k`, by the adjoint recursion.
    fn input_gradient(&self, states: &[Vec<f64>], inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let h1 = self.stages;
        let mut lambda: Vec<f64> = self
            .q
            .matvec(&sub_vec(&states[h1], &self.x_ref[h1]))?
            .iter()
            .map(|v| 2.0 * v)
            .collect();
        let mut grads = vec![Vec::new(); h1];
        for k in (0..h1).rev() {
            let (a, b) = (self.dynamics)(k);
            let du = match self.u_ref {
                Some(w) => sub_vec(&inputs[k], &w[k]),
                None => inputs[k].clone(),
            };
            let mut g: Vec<f64> = self.r.matvec(&du)?.iter().map(|v| 2.0 * v).collect();
            axpy(1.0, &b.tr_matvec(&lambda)?, &mut g);
            grads[k] = g;
            let mut next: Vec<f64> = self
                .q
                .matvec(&sub_vec(&states[k], &self.x_ref[k]))?
                .iter()
                .map(|v| 2.0 * v)
                .collect();
            axpy(1.0, &a.tr_matvec(&lambda)?, &mut next);
            lambda = next;
        }
        Ok(grads)
    }
}

fn stacked_norm(vs: &[Vec<f64>]) -> f64 {
    libm::sqrt(vs.iter().map(|v| dot(v, v)).sum())
}

/// Globally optimal inputs of a linear tracking problem.
pub fn solve_lq_tracking(prob: &LqTrackingProblem) -> Result<MpcSolution> {
    prob.validate()?;
    let stages = prob.reference.len() - 1;
    let dynamics = |_k: usize| (&prob.a, &prob.b);
    let lq = AffineLq {
        stages,
        dynamics: &dynamics,
        offsets: None,
        q: &prob.q,
        r: &prob.r,
        x_ref: &prob.reference,
        u_ref: None,
        input_regularization: 0.0,
    };
    let gains = lq.backward()?;

    let mut states = Vec::with_capacity(stages + 1);
    let mut inputs = Vec::with_capacity(stages);
    states.push(prob.x0.clone());
    for g in &gains {
        let x = &states[states.len() - 1];
        let mut u = g.k_fb.matvec(x)?;
        axpy(1.0, &g.k_ff, &mut u);
        let mut next = prob.a.matvec(x)?;
        axpy(1.0, &prob.b.matvec(&u)?, &mut next);
        inputs.push(u);
        states.push(next);
    }
    if states.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("LQ rollout"));
    }
    let objective = prob.objective(&states, &inputs);
    let kkt = stacked_norm(&lq.input_gradient(&states, &inputs)?);
    Ok(MpcSolution {
        inputs,
        trajectory: states,
        objective,
        diagnostics: SolverDiagnostics {
            iterations: 1,
            kkt_residual: kkt,
            cost_history: vec![objective],
        },
    })
}

/// Convex MPC in the lifted space of an embedding model.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanMpc {
    pub cost: QuadraticCostSpec,
    /// Optional `ε` added to the diagonal of `CᵀQ_state C`.
    pub q_regularization: f64,
}

impl KoopmanMpc {
    pub fn new(cost: QuadraticCostSpec) -> Self {
        Self {
            cost,
            q_regularization: 0.0,
        }
    }

    /// Lifted problem with `ξ_0 = g(x)`, `ξ_ref_k = g(x_ref_k)` and `Q = CᵀQ_state C`.
    pub fn problem(&self, model: &EmbeddingModel, x: &[f64]) -> Result<LqTrackingProblem> {
        check_len("KoopmanMpc state", self.cost.state_dim(), model.state_dim)?;
        check_len("KoopmanMpc input", self.cost.input_dim(), model.input_dim)?;
        let x0 = model.embed(x)?;
        // Constant stretches of the reference are embedded once.
        let mut reference: Vec<Vec<f64>> = Vec::with_capacity(self.cost.reference.len());
        for (k, r) in self.cost.reference.iter().enumerate() {
            let lifted = if k > 0 && self.cost.reference[k - 1] == *r {
                reference[k - 1].clone()
            } else {
                model.embed(r)?
            };
            reference.push(lifted);
        }
        let mut q = model.c.tr_matmul(&self.cost.q_state.matmul(&model.c)?)?;
        q.symmetrize();
        if self.q_regularization > 0.0 {
            q.add_diag(self.q_regularization);
        }
        Ok(LqTrackingProblem {
            a: model.a.clone(),
            b: model.b.clone(),
            q,
            r: self.cost.r.clone(),
            x0,
            reference,
        })
    }

    pub fn solve(&self, model: &EmbeddingModel, x: &[f64]) -> Result<MpcSolution> {
        solve_lq_tracking(&self.problem(model, x)?)
    }
}

/// First input of the Koopman MPC solution at state `x`.
pub fn koopman_mpc_step(x: &[f64], model: &EmbeddingModel, cost: &QuadraticCostSpec) -> Result<Vec<f64>> {
    let sol = KoopmanMpc::new(cost.clone()).solve(model, x)?;
    Ok(sol.inputs[0].clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlqrSettings {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this.
    pub tolerance: f64,
    pub line_search_factor: f64,
    pub line_search_trials: usize,
    pub initial_regularization: f64,
    pub regularization_factor: f64,
    pub max_regularization: f64,
}

impl Default for IlqrSettings {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-6,
            line_search_factor: 0.5,
            line_search_trials: 10,
            initial_regularization: 1e-6,
            regularization_factor: 10.0,
            max_regularization: 1e10,
        }
    }
}

/// Iterative LQR on `f` from `x0`.
///
/// Each iteration linearizes along the current rollout, solves the
/// regularized affine LQ subproblem for a feedback update, and accepts the
/// first line-search step that strictly lowers the true cost.
pub fn ilqr_solve<D: DiscreteDynamics + ?Sized>(
    f: &D,
    x0: &[f64],
    cost: &QuadraticCostSpec,
    warm_start: Option<&[Vec<f64>]>,
    settings: &IlqrSettings,
) -> Result<MpcSolution> {
    cost.validate()?;
    let n = f.state_dim();
    let p = f.input_dim();
    check_len("ilqr state", n, x0.len())?;
    check_len("ilqr cost state", n, cost.state_dim())?;
    check_len("ilqr cost input", p, cost.input_dim())?;
    let stages = cost.horizon + 1;

    let mut inputs: Vec<Vec<f64>> = match warm_start {
        Some(w) => {
            check_len("ilqr warm start", stages, w.len())?;
            for u in w {
                check_len("ilqr warm start input", p, u.len())?;
            }
            w.to_vec()
        }
        None => vec![vec![0.0; p]; stages],
    };
    let diverged = |iterations: usize, last_cost: f64| Error::Divergence { iterations, last_cost };
    let mut states = rollout(f, x0, &inputs).map_err(|_| diverged(0, f64::NAN))?;
    let mut j = cost.objective(&states, &inputs);
    if !j.is_finite() {
        return Err(diverged(0, j));
    }

    let mut mu = settings.initial_regularization;
    let mut history = vec![j];
    let mut iterations = 0;
    let mut kkt = f64::NAN;

    'outer: for _ in 0..settings.max_iterations {
        let jac = states[..stages]
            .iter()
            .zip(&inputs)
            .map(|(x, u)| f.jacobians(x, u))
            .collect::<Result<Vec<_>>>()
            .map_err(|_| diverged(iterations, j))?;
        let dx_ref: Vec<Vec<f64>> = cost.reference.iter().zip(&states).map(|(r, x)| sub_vec(r, x)).collect();
        let du_ref: Vec<Vec<f64>> = inputs.iter().map(|u| u.iter().map(|v| -v).collect()).collect();
        let dynamics = |k: usize| (&jac[k].0, &jac[k].1);

        let zero_dx = vec![vec![0.0; n]; stages + 1];
        let zero_du = vec![vec![0.0; p]; stages];
        let mut lq = AffineLq {
            stages,
            dynamics: &dynamics,
            offsets: None,
            q: &cost.q_state,
            r: &cost.r,
            x_ref: &dx_ref,
            u_ref: Some(&du_ref),
            input_regularization: mu,
        };
        kkt = stacked_norm(&lq.input_gradient(&zero_dx, &zero_du)?);

        let gains = loop {
            lq.input_regularization = mu;
            match lq.backward() {
                Ok(g) => break g,
                Err(_) => {
                    mu *= settings.regularization_factor;
                    if mu > settings.max_regularization {
                        break 'outer;
                    }
                }
            }
        };

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..settings.line_search_trials {
            if let Ok((xs, us)) = forward_with_gains(f, x0, &states, &inputs, &gains, alpha) {
                let jn = cost.objective(&xs, &us);
                if jn.is_finite() && jn < j {
                    accepted = Some((xs, us, jn));
                    break;
                }
            }
            alpha *= settings.line_search_factor;
        }

        match accepted {
            Some((xs, us, jn)) => {
                let decrease = j - jn;
                states = xs;
                inputs = us;
                j = jn;
                history.push(j);
                iterations += 1;
                mu = (mu / settings.regularization_factor).max(settings.initial_regularization);
                if decrease < settings.tolerance {
                    break;
                }
            }
            None => {
                mu *= settings.regularization_factor;
                if mu > settings.max_regularization {
                    break;
                }
            }
        }
    }

    Ok(MpcSolution {
        inputs,
        trajectory: states,
        objective: j,
        diagnostics: SolverDiagnostics {
            iterations,
            kkt_residual: kkt,
            cost_history: history,
        },
    })
}

type Trajectory = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn forward_with_gains<D: DiscreteDynamics + ?Sized>(
    f: &D,
    x0: &[f64],
    states: &[Vec<f64>],
    inputs: &[Vec<f64>],
    gains: &[StageGain],
    alpha: f64,
) -> Result<Trajectory> {
    let mut xs = Vec::with_capacity(states.len());
    let mut us = Vec::with_capacity(inputs.len());
    xs.push(x0.to_vec());
    for (k, g) in gains.iter().enumerate() {
        let x = &xs[k];
        let dx = sub_vec(x, &states[k]);
        let mut u = inputs[k].clone();
        axpy(alpha, &g.k_ff, &mut u);
        axpy(1.0, &g.k_fb.matvec(&dx)?, &mut u);
        let next = f.step(x, &u)?;
        if next.iter().any(|v| !v.is_finite()) || norm(&next) > 1e12 {
            return Err(Error::NonFinite("line-search rollout"));
        }
        us.push(u);
        xs.push(next);
    }
    Ok((xs, us))
}
