mod common;

use common::*;
use koopman_adapt_core::koopman_form::{linspace, verify_koopman_form, KoopmanFormSettings, ScalarPolySystem};
use koopman_adapt_core::mpc::ilqr_solve;
use koopman_adapt_core::rff::rff_mpc_step;
use koopman_adapt_core::{Cartpole, CartpoleParams, IlqrSettings, Matrix, QuadraticCostSpec, RffModel};
use nalgebra::DMatrix;

#[test]
fn features_approximate_gaussian_kernel() {
    let sigma = 1.3;
    let m = RffModel::new(5, 1, 512, sigma, 1.0, 1.0, 17).unwrap();
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let z1 = random_vec(5, 1.0, &mut r);
        let z2 = random_vec(5, 1.0, &mut r);
        let approx: f64 = m.features(&z1).unwrap().iter().zip(m.features(&z2).unwrap()).map(|(a, b)| a * b).sum();
        let d2: f64 = z1.iter().zip(&z2).map(|(a, b)| (a - b).powi(2)).sum();
        let exact = (-d2 / (2.0 * sigma * sigma)).exp();
        worst = worst.max((approx - exact).abs());
    }
    assert!(worst < 0.1, "{worst}");
}

#[test]
fn rls_without_forgetting_equals_ridge_regression() {
    let (d, outputs, p0) = (24, 3, 100.0);
    let mut m = RffModel::new(4, outputs, d, 0.8, 1.0, p0, 5).unwrap();
    let mut r = rng(6);
    let mut phis = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..500 {
        let z = random_vec(4, 1.0, &mut r);
        let t = random_vec(outputs, 1.0, &mut r);
        phis.extend(m.features(&z).unwrap());
        targets.extend(t.iter().copied());
        m.rls_update(&z, &t).unwrap();
    }
    let phi = DMatrix::from_row_slice(500, d, &phis);
    let y = DMatrix::from_row_slice(500, outputs, &targets);
    let gram = phi.transpose() * &phi + DMatrix::identity(d, d) / p0;
    let w = gram.cholesky().unwrap().solve(&(phi.transpose() * y)).transpose();
    let diff = (to_na(&m.weights) - w).abs().max();
    assert!(diff < 1e-8, "{diff}");
    assert_eq!(m.resets, 0);
}

#[test]
fn zero_weights_reproduce_nominal_mpc() {
    let nominal = Cartpole::new(CartpoleParams::nominal(), 1.0 / 15.0);
    let cost = QuadraticCostSpec::regulate(
        20,
        Matrix::from_diag(&[5.0, 0.1, 5.0, 0.1]),
        Matrix::from_rows(&[[0.1]]).unwrap(),
    )
    .unwrap();
    let model = RffModel::new(5, 4, 64, 1.0, 0.999, 100.0, 0).unwrap();
    let settings = IlqrSettings::default();
    let mut warm: Option<Vec<Vec<f64>>> = None;
    let mut x = vec![0.5, 0.0, -0.2, 0.1];
    for _ in 0..5 {
        let a = rff_mpc_step(&x, &model, &nominal, &cost, warm.as_deref(), &settings).unwrap();
        let b = ilqr_solve(&nominal, &x, &cost, warm.as_deref(), &settings).unwrap();
        assert_eq!(a.inputs, b.inputs);
        warm = Some(a.shifted_inputs());
        x = koopman_adapt_core::DiscreteDynamics::step(&nominal, &x, a.first_input()).unwrap();
    }
    let eq = rff_mpc_step(&[0.0; 4], &model, &nominal, &cost, None, &settings).unwrap();
    assert!(eq.first_input()[0].abs() < 1e-9);
}

#[test]
fn koopman_form_residual_on_polynomial_system() {
    let sys = ScalarPolySystem { a: 0.9, b: 0.1, c: 0.5 };
    let grid = linspace(-1.0, 1.0, 21);
    let rep = verify_koopman_form(&sys, 3, &grid, &grid, &KoopmanFormSettings::default()).unwrap();
    assert_eq!(rep.evaluations, 441);
    assert!(rep.max_residual < 1e-6, "{rep:?}");
}

#[test]
fn median_heuristic_of_collinear_points() {
    let pts: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 0.0]).collect();
    // Distances 1,1,1,2,2,3.
    let med = koopman_adapt_core::rff::median_heuristic(&pts).unwrap();
    assert_eq!(med, 1.5);
}
