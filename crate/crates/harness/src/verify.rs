//! Numerical self-checks against independent oracles. Used by the `verify`
//! subcommand and by the acceptance suite.

use std::time::Instant;

use koopman_adapt_core::dynamics::rollout;
use koopman_adapt_core::koopman_form::{linspace, verify_koopman_form, KoopmanFormSettings, ScalarPolySystem};
use koopman_adapt_core::mpc::solve_lq_tracking;
use koopman_adapt_core::nn::{Activation, FeatureNetwork};
use koopman_adapt_core::training::{fit_linear_operators, generate_dataset, train_offline, BoxSampler, DatasetMeta};
use koopman_adapt_core::{
    AdaptationConfig, AdaptiveKoopmanMpc, Cartpole, CartpoleParams, Dataset, DiscreteDynamics, EmbeddingModel,
    IlqrSettings, KoopmanMpc, LinearDynamics, LossWeights, LqTrackingProblem, Matrix, OfflineTrainConfig, ParamMask,
    QuadraticCostSpec, RffModel, Transition,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &'static str, f: impl FnOnce() -> anyhow::Result<(bool, String)>) -> CheckOutcome {
    let t0 = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e:#}")));
    CheckOutcome {
        name,
        passed,
        detail,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(rows: usize, cols: usize, scale: f64, r: &mut ChaCha8Rng) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| r.random_range(-scale..scale)).collect()).unwrap()
}

fn random_vec(len: usize, scale: f64, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| r.random_range(-scale..scale)).collect()
}

fn na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

/// Denominator floor for componentwise relative errors.
pub const REL_FLOOR: f64 = 1e-3;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / REL_FLOOR.max(a.abs().max(b.abs()))
}

/// Largest componentwise relative error between `loss_and_gradients` and
/// central differences (step `h`) over `instances` random models and batches.
pub fn gradient_oracle(instances: usize, seed: u64, h: f64) -> anyhow::Result<f64> {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = r.random_range(1..=4);
        let p = r.random_range(1..=2);
        let learned = r.random_range(1..=3);
        let mut widths = vec![n];
        for _ in 0..r.random_range(1..=2) {
            widths.push(r.random_range(2..=6));
        }
        widths.push(learned);
        let net = FeatureNetwork::random(&widths, Activation::Tanh, &mut r)?;
        let lifted = n + learned;
        let mut model = EmbeddingModel::new(
            net,
            random_matrix(lifted, lifted, 0.6, &mut r),
            random_matrix(lifted, p, 0.6, &mut r),
            p,
        )?;
        let batch: Vec<Transition> = (0..r.random_range(1..=6))
            .map(|_| Transition::new(random_vec(n, 1.0, &mut r), random_vec(p, 1.0, &mut r), random_vec(n, 1.0, &mut r)))
            .collect();
        let w = LossWeights {
            lambda1: r.random_range(0.1..2.0),
            lambda2: r.random_range(0.0..1.0),
        };
        let (_, grads) = model.loss_and_gradients(&batch, w, ParamMask::ALL)?;
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        for (ti, g) in analytic.iter().enumerate() {
            for (j, gj) in g.iter().enumerate() {
                let orig = model.trainable_tensors_mut(ParamMask::ALL)[ti][j];
                model.trainable_tensors_mut(ParamMask::ALL)[ti][j] = orig + h;
                let fp = model.batch_loss(&batch, w)?;
                model.trainable_tensors_mut(ParamMask::ALL)[ti][j] = orig - h;
                let fm = model.batch_loss(&batch, w)?;
                model.trainable_tensors_mut(ParamMask::ALL)[ti][j] = orig;
                worst = worst.max(rel_err(*gj, (fp - fm) / (2.0 * h)));
            }
        }
    }
    Ok(worst)
}

/// Minimizes the stacked quadratic in `(u_0 … u_H)` by explicit normal equations.
/// Returns the stacked inputs and the objective.
pub fn dense_lq_oracle(prob: &LqTrackingProblem) -> anyhow::Result<(Vec<f64>, f64)> {
    let n = prob.a.rows();
    let p = prob.b.cols();
    let h = prob.horizon();
    let m = (h + 1) * p;
    let (a, b, q, rr) = (na(&prob.a), na(&prob.b), na(&prob.q), na(&prob.r));
    let mut g = DMatrix::<f64>::zeros(n, m);
    let mut c = DVector::from_column_slice(&prob.x0);
    let mut hess = DMatrix::<f64>::zeros(m, m);
    let mut lin = DVector::<f64>::zeros(m);
    let mut constant = 0.0;
    for k in 0..=h + 1 {
        let d = &c - DVector::from_column_slice(&prob.reference[k]);
        hess += g.transpose() * &q * &g;
        lin += g.transpose() * &q * &d;
        constant += (d.transpose() * &q * &d)[(0, 0)];
        if k <= h {
            let mut blk = hess.view_mut((k * p, k * p), (p, p));
            blk += &rr;
            let mut next = &a * &g;
            next.view_mut((0, k * p), (n, p)).copy_from(&b);
            g = next;
            c = &a * c;
        }
    }
    let chol = hess.clone().cholesky().ok_or_else(|| anyhow::anyhow!("stacked Hessian not positive definite"))?;
    let u = chol.solve(&(-&lin));
    let obj = (u.transpose() * &hess * &u)[(0, 0)] + 2.0 * lin.dot(&u) + constant;
    Ok((u.as_slice().to_vec(), obj))
}

fn random_spd(n: usize, floor: f64, r: &mut ChaCha8Rng) -> Matrix {
    let l = random_matrix(n, n, 1.0, r);
    let mut m = l.tr_matmul(&l).unwrap();
    m.add_diag(floor);
    m
}

/// `(worst relative objective error, worst KKT residual)` over random
/// instances with `N ≤ 4`, `H ≤ 6`.
pub fn lq_oracle(instances: usize, seed: u64) -> anyhow::Result<(f64, f64)> {
    let mut r = rng(seed);
    let (mut worst_obj, mut worst_kkt): (f64, f64) = (0.0, 0.0);
    for _ in 0..instances {
        let n = r.random_range(1..=4);
        let p = r.random_range(1..=2);
        let h = r.random_range(1..=6);
        let prob = LqTrackingProblem {
            a: random_matrix(n, n, 0.8, &mut r),
            b: random_matrix(n, p, 1.0, &mut r),
            q: random_spd(n, 0.0, &mut r),
            r: random_spd(p, 0.1, &mut r),
            x0: random_vec(n, 1.0, &mut r),
            reference: (0..h + 2).map(|_| random_vec(n, 1.0, &mut r)).collect(),
        };
        let sol = solve_lq_tracking(&prob)?;
        let (_, obj) = dense_lq_oracle(&prob)?;
        worst_obj = worst_obj.max((sol.objective - obj).abs() / obj.abs().max(1e-12));
        worst_kkt = worst_kkt.max(sol.diagnostics.kkt_residual);
    }
    Ok((worst_obj, worst_kkt))
}

fn test_plant() -> (Matrix, Matrix) {
    let a = Matrix::from_rows(&[[1.0, 0.1, 0.0], [0.0, 0.95, 0.2], [0.05, 0.0, 0.9]]).unwrap();
    let b = Matrix::from_rows(&[[0.0], [0.1], [0.3]]).unwrap();
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearEndToEnd {
    /// Max-abs error of the trained `[A B]`.
    pub operator_error: f64,
    /// Max difference between Koopman MPC and direct LQ inputs.
    pub input_error: f64,
    /// Relative difference between lifted and original objectives.
    pub objective_error: f64,
}

/// Offline training on an exactly linear plant, then Koopman MPC with the
/// trained model and with a lifted model carrying extra latent dynamics.
pub fn linear_end_to_end(seed: u64) -> anyhow::Result<LinearEndToEnd> {
    let (a0, b0) = test_plant();
    let plant = LinearDynamics::new(a0.clone(), b0.clone())?;
    let mut r = rng(seed);
    let mut trajectories = Vec::new();
    for _ in 0..20 {
        let mut x = random_vec(3, 1.0, &mut r);
        let mut traj = Vec::new();
        for _ in 0..20 {
            let u = random_vec(1, 1.0, &mut r);
            let y = plant.step(&x, &u)?;
            traj.push(Transition::new(x.clone(), u, y.clone()));
            x = y;
        }
        trajectories.push(traj);
    }
    let data = Dataset {
        trajectories,
        meta: DatasetMeta {
            seed,
            requested_trajectories: 20,
            trajectory_length: 20,
            skipped: vec![],
        },
    };
    let cfg = OfflineTrainConfig {
        epochs: 5,
        batch_size: 64,
        n_learned: 0,
        hidden: vec![4],
        seed,
        ..Default::default()
    };
    let trained = train_offline(&data, &cfg)?.model;
    let operator_error = trained.a.sub(&a0)?.max_abs().max(trained.b.sub(&b0)?.max_abs());

    // Lifted model: exact state block, arbitrary learned coordinates.
    let net = FeatureNetwork::random(&[3, 5, 2], Activation::Tanh, &mut r)?;
    let mut a = random_matrix(5, 5, 0.3, &mut r);
    let mut b = random_matrix(5, 1, 0.3, &mut r);
    a.set_block(0, 0, &a0);
    a.set_block(0, 3, &Matrix::zeros(3, 2));
    b.set_block(0, 0, &b0);
    let lifted = EmbeddingModel::new(net, a, b, 1)?;

    let reference: Vec<Vec<f64>> = (0..8).map(|k| vec![0.2 * (k as f64).sin(), 0.0, -0.1]).collect();
    let cost = QuadraticCostSpec::new(
        6,
        Matrix::from_diag(&[2.0, 0.5, 1.0]),
        Matrix::from_rows(&[[0.3]])?,
        reference.clone(),
    )?;
    let (mut input_error, mut objective_error): (f64, f64) = (0.0, 0.0);
    for _ in 0..10 {
        let x = random_vec(3, 1.0, &mut r);
        let direct = solve_lq_tracking(&LqTrackingProblem {
            a: a0.clone(),
            b: b0.clone(),
            q: cost.q_state.clone(),
            r: cost.r.clone(),
            x0: x.clone(),
            reference: reference.clone(),
        })?;
        for model in [&trained, &lifted] {
            let sol = KoopmanMpc::new(cost.clone()).solve(model, &x)?;
            for (l, d) in sol.inputs.iter().zip(&direct.inputs) {
                input_error = input_error.max((l[0] - d[0]).abs());
            }
            let states = rollout(&plant, &x, &sol.inputs)?;
            let j = cost.objective(&states, &sol.inputs);
            objective_error = objective_error.max((sol.objective - j).abs() / j.abs().max(1e-12));
        }
    }
    Ok(LinearEndToEnd {
        operator_error,
        input_error,
        objective_error,
    })
}

/// Maximum residual of the separated Koopman form on the scalar system
/// `x⁺ = 0.9x + 0.1xu + 0.5u` with monomials up to degree 3 on a 21×21 grid.
pub fn koopman_form_residual() -> anyhow::Result<f64> {
    let sys = ScalarPolySystem { a: 0.9, b: 0.1, c: 0.5 };
    let grid = linspace(-1.0, 1.0, 21);
    Ok(verify_koopman_form(&sys, 3, &grid, &grid, &KoopmanFormSettings::default())?.max_residual)
}

/// Worst relative deviation of `‖A_target − A‖` from `(1−τ)ᵏ` times its
/// initial value over `steps` adaptive steps with `A` frozen.
pub fn soft_update_law(steps: usize, seed: u64) -> anyhow::Result<f64> {
    let dt = 1.0 / 15.0;
    let cost = QuadraticCostSpec::regulate(
        20,
        Matrix::from_diag(&[5.0, 0.1, 5.0, 0.1]),
        Matrix::from_rows(&[[0.1]])?,
    )?;
    let nominal = Cartpole::new(CartpoleParams::nominal(), dt);
    let data = generate_dataset(&nominal, &cost, 4, 20, &BoxSampler::cartpole_default(), seed, &IlqrSettings::default())?;
    let mut r = rng(seed);
    let net = FeatureNetwork::random(&[4, 16, 16, 2], Activation::Tanh, &mut r)?;
    let mut prior = EmbeddingModel::with_identity_dynamics(net, 1)?;
    fit_linear_operators(&mut prior, &data.flattened(), 1e-10)?;
    let cfg = AdaptationConfig {
        mask: ParamMask::FREEZE_A,
        seed,
        ..Default::default()
    };
    let tau = cfg.tau;
    let mut ctrl = AdaptiveKoopmanMpc::new(prior, cost, cfg)?;
    let n = ctrl.pair.target.a.rows();
    ctrl.pair.target.a = ctrl.pair.target.a.add(&random_matrix(n, n, 0.01, &mut r))?;
    let gap0 = ctrl.pair.operator_gap();
    let plant = Cartpole::new(CartpoleParams::true_plant(), dt);
    let mut x = vec![0.1, 0.0, 0.1, 0.0];
    let mut worst: f64 = 0.0;
    for k in 1..=steps {
        let rep = ctrl.adapt_step(&x, &plant)?;
        x = rep.next_state;
        let expected = (1.0 - tau).powi(k as i32) * gap0;
        worst = worst.max((rep.target_gap - expected).abs() / gap0);
    }
    Ok(worst)
}

/// Max-abs difference between RLS weights (forgetting 1) after `updates`
/// random samples and the ridge solution with penalty `1/p0`.
pub fn rls_oracle(updates: usize, seed: u64) -> anyhow::Result<f64> {
    let (d, outputs, p0) = (32, 4, 100.0);
    let mut m = RffModel::new(5, outputs, d, 1.0, 1.0, p0, seed)?;
    let mut r = rng(seed.wrapping_add(1));
    let mut phis = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..updates {
        let z = random_vec(5, 1.0, &mut r);
        let t = random_vec(outputs, 1.0, &mut r);
        phis.extend(m.features(&z)?);
        targets.extend(t.iter().copied());
        m.rls_update(&z, &t)?;
    }
    let phi = DMatrix::from_row_slice(updates, d, &phis);
    let y = DMatrix::from_row_slice(updates, outputs, &targets);
    let gram = phi.transpose() * &phi + DMatrix::identity(d, d) / p0;
    let w = gram
        .cholesky()
        .ok_or_else(|| anyhow::anyhow!("ridge Gram matrix not positive definite"))?
        .solve(&(phi.transpose() * y))
        .transpose();
    Ok((na(&m.weights) - w).abs().max())
}

/// The oracle checks with their pass thresholds.
pub fn all_checks() -> Vec<CheckOutcome> {
    vec![
        timed("gradient oracle", || {
            let e = gradient_oracle(100, 1, 1e-5)?;
            Ok((e < 1e-5, format!("max relative error {e:.2e} over 100 instances (< 1e-5)")))
        }),
        timed("LQ solver oracle", || {
            let (o, k) = lq_oracle(100, 2)?;
            Ok((o < 1e-8 && k < 1e-8, format!("objective rel. error {o:.2e}, KKT {k:.2e} (< 1e-8)")))
        }),
        timed("linear end-to-end", || {
            let r = linear_end_to_end(3)?;
            Ok((
                r.operator_error < 1e-6 && r.input_error < 1e-6 && r.objective_error < 1e-8,
                format!(
                    "[A B] error {:.2e} (< 1e-6), input error {:.2e} (< 1e-6), objective error {:.2e} (< 1e-8)",
                    r.operator_error, r.input_error, r.objective_error
                ),
            ))
        }),
        timed("Koopman-form residual", || {
            let m = koopman_form_residual()?;
            Ok((m < 1e-6, format!("max residual {m:.2e} on 21x21 grid (< 1e-6)")))
        }),
        timed("soft-update law", || {
            let e = soft_update_law(60, 4)?;
            Ok((e < 1e-12, format!("max relative deviation {e:.2e} over 60 steps (< 1e-12)")))
        }),
        timed("RLS oracle", || {
            let e = rls_oracle(500, 5)?;
            Ok((e < 1e-8, format!("max weight difference {e:.2e} after 500 updates (< 1e-8)")))
        }),
    ]
}
