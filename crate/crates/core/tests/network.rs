#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use koopman_adapt_core::embedding::ParamMask;
use koopman_adapt_core::linalg::solve_linear_least_squares;
use koopman_adapt_core::nn::{Activation, FeatureNetwork};
use koopman_adapt_core::optim::{AdamConfig, OptimizerState};
use koopman_adapt_core::{LossWeights, Matrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Plain nalgebra forward pass over the network's stored parameters.
fn reference_forward(net: &FeatureNetwork, x: &[f64]) -> Vec<f64> {
    let mut a = DVector::from_column_slice(x);
    let last = net.layers().len() - 1;
    for (i, layer) in net.layers().iter().enumerate() {
        let w = to_na(&layer.weight);
        let z = w * a + DVector::from_column_slice(&layer.bias);
        a = if i == last { z } else { z.map(f64::tanh) };
    }
    a.as_slice().to_vec()
}

#[test]
fn seed_zero_forward_matches_reference() {
    let net = FeatureNetwork::random(&[2, 4, 1], Activation::Tanh, &mut rng(0)).unwrap();
    let got = net.forward(&[0.5, -0.5]).unwrap();
    let want = reference_forward(&net, &[0.5, -0.5]);
    assert_eq!(got.len(), 1);
    assert!((got[0] - want[0]).abs() < 1e-15, "{got:?} vs {want:?}");
}

#[test]
fn backward_matches_finite_differences() {
    let h = 1e-5;
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let mut net = FeatureNetwork::random(&[3, 5, 4, 2], Activation::Tanh, &mut r).unwrap();
        let x = random_vec(3, 1.0, &mut r);
        let up = random_vec(2, 1.0, &mut r);
        let (grads, dx) = net.backward(&x, &up).unwrap();
        let objective = |n: &FeatureNetwork, x: &[f64]| -> f64 {
            n.forward(x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        for (ti, g) in analytic.iter().enumerate() {
            for j in 0..g.len() {
                let orig = net.tensors()[ti][j];
                net.tensors_mut()[ti][j] = orig + h;
                let fp = objective(&net, &x);
                net.tensors_mut()[ti][j] = orig - h;
                let fm = objective(&net, &x);
                net.tensors_mut()[ti][j] = orig;
                let fd = (fp - fm) / (2.0 * h);
                assert!(rel_err(g[j], fd) < 1e-5, "tensor {ti} entry {j}: {} vs {fd}", g[j]);
            }
        }
        for j in 0..3 {
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let fd = (objective(&net, &xp) - objective(&net, &xm)) / (2.0 * h);
            assert!(rel_err(dx[j], fd) < 1e-5);
        }
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    let h = 1e-5;
    let w = LossWeights { lambda1: 1.0, lambda2: 0.5 };
    for seed in 0..10 {
        let mut r = rng(200 + seed);
        let mut model = random_model(3, 1, &[6], 2, &mut r);
        let batch = random_batch(3, 1, 5, &mut r);
        let (_, grads) = model.loss_and_gradients(&batch, w, ParamMask::ALL).unwrap();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        for (ti, g) in analytic.iter().enumerate() {
            for j in 0..g.len() {
                let orig = model.trainable_tensors_mut(ParamMask::ALL)[ti][j];
                model.trainable_tensors_mut(ParamMask::ALL)[ti][j] = orig + h;
                let fp = model.batch_loss(&batch, w).unwrap();
                model.trainable_tensors_mut(ParamMask::ALL)[ti][j] = orig - h;
                let fm = model.batch_loss(&batch, w).unwrap();
                model.trainable_tensors_mut(ParamMask::ALL)[ti][j] = orig;
                let fd = (fp - fm) / (2.0 * h);
                assert!(rel_err(g[j], fd) < 1e-5, "seed {seed} tensor {ti} entry {j}: {} vs {fd}", g[j]);
            }
        }
    }
}

#[test]
fn frozen_a_is_untouched_by_training() {
    let mut r = rng(7);
    let mut model = random_model(2, 1, &[4], 1, &mut r);
    let batch = random_batch(2, 1, 8, &mut r);
    let a0 = model.a.clone();
    let mut opt = OptimizerState::new(AdamConfig::default());
    for _ in 0..5 {
        let (_, g) = model.loss_and_gradients(&batch, LossWeights::default(), ParamMask::FREEZE_A).unwrap();
        assert!(g.a.is_none());
        let gt = g.tensors();
        opt.step(&mut model.trainable_tensors_mut(ParamMask::FREEZE_A), &gt).unwrap();
    }
    assert_eq!(model.a, a0);
}

#[test]
fn adam_reaches_quadratic_minimum() {
    // f(w) = (w - c)ᵀ H (w - c) with H = diag(1, 4); optimum value 0 at c.
    let c = [1.5, -0.5];
    let hdiag = [1.0, 4.0];
    let f = |w: &[f64]| (0..2).map(|i| hdiag[i] * (w[i] - c[i]).powi(2)).sum::<f64>();
    let mut w = vec![0.0, 0.0];
    let gap0 = f(&w);
    let mut opt = OptimizerState::new(AdamConfig {
        learning_rate: 0.05,
        beta1: 0.7,
        beta2: 0.999,
        epsilon: 1e-12,
    });
    let mut history = vec![gap0];
    for _ in 0..100 {
        let g: Vec<f64> = (0..2).map(|i| 2.0 * hdiag[i] * (w[i] - c[i])).collect();
        opt.step(&mut [&mut w[..]], &[&g[..]]).unwrap();
        history.push(f(&w));
    }
    assert_eq!(opt.steps_taken(), 100);
    assert!(history[100] < 1e-6 * gap0, "final gap {}", history[100]);
    let warm = 10;
    assert!(history[warm..].windows(2).all(|p| p[1] <= p[0]), "{history:?}");
}

#[test]
fn overdetermined_least_squares_satisfies_normal_equations() {
    let mut r = rng(11);
    let phi = random_matrix(20, 3, 1.0, &mut r);
    let y = random_matrix(20, 2, 1.0, &mut r);
    let w = solve_linear_least_squares(&phi, &y, 0.0).unwrap();
    let (p, yy) = (to_na(&phi), to_na(&y));
    let oracle = (p.transpose() * &p).cholesky().unwrap().solve(&(p.transpose() * &yy));
    let diff = (to_na(&w) - oracle).abs().max();
    assert!(diff < 1e-10, "{diff}");
}

fn normal_equation_residual(phi: &Matrix, y: &Matrix, w: &Matrix, ridge: f64) -> f64 {
    let (p, yy, ww) = (to_na(phi), to_na(y), to_na(w));
    let r: DMatrix<f64> = p.transpose() * (&p * &ww - &yy) + ridge * &ww;
    r.norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn least_squares_normal_equations(
        seed in any::<u64>(),
        m in 3usize..30,
        q in 1usize..4,
        ridge in prop_oneof![Just(0.0), 1e-6..1.0f64],
    ) {
        prop_assume!(m >= q);
        let mut r = rng(seed);
        let phi = random_matrix(m, q, 1.0, &mut r);
        let y = random_matrix(m, 2, 3.0, &mut r);
        let w = solve_linear_least_squares(&phi, &y, ridge).unwrap();
        let res = normal_equation_residual(&phi, &y, &w, ridge);
        prop_assert!(res < 1e-8 * (1.0 + y.frobenius_norm()), "residual {}", res);
    }

    #[test]
    fn forward_is_deterministic(seed in any::<u64>(), x0 in -2.0..2.0f64, x1 in -2.0..2.0f64) {
        let net = FeatureNetwork::random(&[2, 8, 3], Activation::Tanh, &mut rng(seed)).unwrap();
        let a = net.forward(&[x0, x1]).unwrap();
        let b = net.clone().forward(&[x0, x1]).unwrap();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn decode_embed_is_identity(seed in any::<u64>(), x in proptest::collection::vec(-10.0..10.0f64, 4)) {
        let model = random_model(4, 1, &[5], 2, &mut rng(seed));
        let back = model.decode(&model.embed(&x).unwrap()).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn gemm_matches_nalgebra(
        seed in any::<u64>(),
        m in 1usize..9,
        k in 0usize..9,
        n in 1usize..9,
        ta in any::<bool>(),
        tb in any::<bool>(),
        beta in prop_oneof![Just(0.0), -1.0..1.0f64],
    ) {
        let mut r = rng(seed);
        let a = if ta { random_matrix(k, m, 1.0, &mut r) } else { random_matrix(m, k, 1.0, &mut r) };
        let b = if tb { random_matrix(n, k, 1.0, &mut r) } else { random_matrix(k, n, 1.0, &mut r) };
        let mut c = random_matrix(m, n, 1.0, &mut r);
        let (na, nb) = (to_na(&a), to_na(&b));
        let opa = if ta { na.transpose() } else { na };
        let opb = if tb { nb.transpose() } else { nb };
        let expected = 0.7 * opa * opb + beta * to_na(&c);
        Matrix::gemm(0.7, &a, ta, &b, tb, beta, &mut c).unwrap();
        prop_assert!((to_na(&c) - expected).abs().max() < 1e-13);
    }

    #[test]
    fn batched_passes_match_per_sample(seed in any::<u64>(), rows in 1usize..7) {
        let mut r = rng(seed);
        let net = FeatureNetwork::random(&[3, 5, 4, 2], Activation::Tanh, &mut r).unwrap();
        let x = random_matrix(rows, 3, 1.5, &mut r);
        let up = random_matrix(rows, 2, 1.0, &mut r);
        let cache = net.forward_batch(x.clone()).unwrap();
        let mut batched = koopman_adapt_core::nn::NetGradients::zeros_like(&net);
        net.backward_batch(&cache, up.clone(), &mut batched).unwrap();
        let mut single = koopman_adapt_core::nn::NetGradients::zeros_like(&net);
        for i in 0..rows {
            let out = net.forward(x.row(i)).unwrap();
            for (a, b) in out.iter().zip(cache.output().row(i)) {
                prop_assert!((a - b).abs() < 1e-14);
            }
            let c = net.forward_cached(x.row(i)).unwrap();
            net.backward_accumulate(&c, up.row(i), &mut single).unwrap();
        }
        for (a, b) in batched.tensors().iter().zip(single.tensors()) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() < 1e-12, "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn loss_is_non_negative(seed in any::<u64>(), l1 in 0.0..2.0f64, l2 in 0.0..2.0f64) {
        prop_assume!(l1 + l2 > 0.0);
        let mut r = rng(seed);
        let model = random_model(2, 1, &[3], 1, &mut r);
        let batch = random_batch(2, 1, 4, &mut r);
        let loss = model.batch_loss(&batch, LossWeights { lambda1: l1, lambda2: l2 }).unwrap();
        prop_assert!(loss >= 0.0);
    }
}
