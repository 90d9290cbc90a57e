#![allow(dead_code)]

use koopman_adapt_core::nn::{Activation, FeatureNetwork};
use koopman_adapt_core::{EmbeddingModel, Matrix, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn random_vec(len: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Small embedding model with random network, `A` and `B`.
pub fn random_model(n: usize, p: usize, hidden: &[usize], learned: usize, rng: &mut ChaCha8Rng) -> EmbeddingModel {
    let mut widths = vec![n];
    widths.extend_from_slice(hidden);
    widths.push(learned);
    let net = FeatureNetwork::random(&widths, Activation::Tanh, rng).unwrap();
    let lifted = n + learned;
    let a = random_matrix(lifted, lifted, 0.5, rng);
    let b = random_matrix(lifted, p, 0.5, rng);
    EmbeddingModel::new(net, a, b, p).unwrap()
}

pub fn random_batch(n: usize, p: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
    (0..size)
        .map(|_| Transition::new(random_vec(n, 1.0, rng), random_vec(p, 1.0, rng), random_vec(n, 1.0, rng)))
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1e-3f64).max(a.abs().max(b.abs()))
}

pub fn to_na(m: &Matrix) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}
