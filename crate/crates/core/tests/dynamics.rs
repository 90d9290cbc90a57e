use koopman_adapt_core::dynamics::{cartpole_rhs, rk4_step, scale_params};
use koopman_adapt_core::{Cartpole, CartpoleParams, DiscreteDynamics};
use nalgebra::{DMatrix, Matrix2, Vector2};
use proptest::prelude::*;

/// Accelerations from the Lagrangian mass-matrix form of a cart with a
/// uniform rod (inertia about the pivot `4/3 m_p l²`).
fn lagrangian_accelerations(s: &[f64; 4], force: f64, p: &CartpoleParams) -> (f64, f64) {
    let (th, thd) = (s[2], s[3]);
    let total = p.m_c + p.m_p;
    let ml = p.m_p * p.l;
    let mass = Matrix2::new(total, ml * th.cos(), ml * th.cos(), 4.0 / 3.0 * p.m_p * p.l * p.l);
    let rhs = Vector2::new(force + ml * thd * thd * th.sin(), ml * p.gravity * th.sin());
    let acc = mass.lu().solve(&rhs).unwrap();
    (acc[0], acc[1])
}

#[test]
fn rhs_matches_mass_matrix_form() {
    let p = CartpoleParams::true_plant();
    let s = [0.0, 0.0, 0.1, 0.0];
    let d = cartpole_rhs(&s, 1.0, &p);
    let (xa, ta) = lagrangian_accelerations(&s, 1.0, &p);
    assert_eq!(d[0], 0.0);
    assert_eq!(d[2], 0.0);
    assert!((d[1] - xa).abs() < 1e-13, "{} vs {xa}", d[1]);
    assert!((d[3] - ta).abs() < 1e-13, "{} vs {ta}", d[3]);
}

#[test]
fn equilibria_are_exact() {
    let p = CartpoleParams::true_plant();
    assert_eq!(cartpole_rhs(&[0.0; 4], 0.0, &p), [0.0; 4]);
    let hanging = cartpole_rhs(&[0.0, 0.0, std::f64::consts::PI, 0.0], 0.0, &p);
    // sin(π) is 1.2e-16 in f64.
    assert!(hanging.iter().all(|v| v.abs() < 1e-14), "{hanging:?}");
    let plant = Cartpole::new(p, 1.0 / 15.0);
    assert_eq!(plant.step(&[0.0; 4], &[0.0]).unwrap(), vec![0.0; 4]);
}

#[test]
fn two_half_steps_agree_with_one_full_step() {
    let p = CartpoleParams::true_plant();
    let dt = 1.0 / 15.0;
    let s = [0.0, 0.0, 0.1, 0.0];
    let full = rk4_step(&s, 1.0, dt, &p).unwrap();
    let half = rk4_step(&rk4_step(&s, 1.0, dt / 2.0, &p).unwrap(), 1.0, dt / 2.0, &p).unwrap();
    let diff = full.iter().zip(&half).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");
}

#[test]
fn small_signal_step_matches_matrix_exponential() {
    let p = CartpoleParams::true_plant();
    let dt = 1.0 / 15.0;
    let total = p.m_c + p.m_p;
    let ml = p.m_p * p.l;
    // Upright linearization of the mass-matrix form.
    let minv = Matrix2::new(total, ml, ml, 4.0 / 3.0 * p.m_p * p.l * p.l).try_inverse().unwrap();
    let dtheta = minv * Vector2::new(0.0, ml * p.gravity);
    let dforce = minv * Vector2::new(1.0, 0.0);
    // Augmented [x; u] generator with u held constant.
    let mut gen = DMatrix::<f64>::zeros(5, 5);
    gen[(0, 1)] = 1.0;
    gen[(2, 3)] = 1.0;
    gen[(1, 2)] = dtheta[0];
    gen[(3, 2)] = dtheta[1];
    gen[(1, 4)] = dforce[0];
    gen[(3, 4)] = dforce[1];
    let phi = (gen * dt).exp();
    let plant = Cartpole::new(p, dt);
    let s = [4e-4, -3e-4, 5e-4, 6e-4];
    let u = 5e-4;
    let lin = &phi * nalgebra::DVector::from_vec(vec![s[0], s[1], s[2], s[3], u]);
    let nl = plant.step(&s, &[u]).unwrap();
    let err = (0..4).map(|i| (lin[i] - nl[i]).abs()).fold(0.0, f64::max);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn scale_params_examples() {
    let nom = CartpoleParams::nominal();
    assert_eq!(scale_params(&nom, 0.0), nom);
    let s = scale_params(&nom, 0.1);
    assert!((s.m_c - 0.825).abs() < 1e-15 && (s.m_p - 0.0825).abs() < 1e-15 && (s.l - 0.4125).abs() < 1e-15);
    let t = scale_params(&nom, 1.0 / 3.0);
    let truth = CartpoleParams::true_plant();
    assert!((t.m_c - truth.m_c).abs() < 1e-15 && (t.m_p - truth.m_p).abs() < 1e-15 && (t.l - truth.l).abs() < 1e-15);
    assert_eq!(t.gravity, nom.gravity);
}

proptest! {
    #[test]
    fn angular_acceleration_is_odd_in_theta(theta in 0.01..1.5f64) {
        let p = CartpoleParams::nominal();
        let plus = cartpole_rhs(&[0.0, 0.0, theta, 0.0], 0.0, &p)[3];
        let minus = cartpole_rhs(&[0.0, 0.0, -theta, 0.0], 0.0, &p)[3];
        prop_assert!(plus > 0.0);
        prop_assert_eq!(plus, -minus);
    }

    #[test]
    fn step_has_no_hidden_state(
        s in proptest::array::uniform4(-1.0..1.0f64),
        u in -5.0..5.0f64,
    ) {
        let plant = Cartpole::new(CartpoleParams::true_plant(), 1.0 / 15.0);
        let a = plant.step(&s, &[u]).unwrap();
        let _ = plant.step(&[0.3, 0.1, -0.2, 0.0], &[1.0]).unwrap();
        let b = plant.step(&s, &[u]).unwrap();
        prop_assert_eq!(a, b);
    }
}
