//! Small fully connected feature network with hand-written reverse mode.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, Matrix};

/// Hidden-layer nonlinearity. The output layer is always affine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(v),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out x in`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Feed-forward network `R^n -> R^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct FeatureNetwork {
    widths: Vec<usize>,
    layers: Vec<Layer>,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    widths: Vec<usize>,
    activation: Activation,
    layers: Vec<Layer>,
}

impl From<FeatureNetwork> for NetworkRepr {
    fn from(n: FeatureNetwork) -> Self {
        NetworkRepr {
            widths: n.widths,
            activation: n.activation,
            layers: n.layers,
        }
    }
}

impl TryFrom<NetworkRepr> for FeatureNetwork {
    type Error = Error;

    fn try_from(r: NetworkRepr) -> Result<Self> {
        let mut layers = r.layers;
        // A zero-row weight serializes as `[]` and loses its column count.
        for (l, layer) in layers.iter_mut().enumerate() {
            if layer.weight.rows() == 0 {
                if let Some(&fan_in) = r.widths.get(l) {
                    layer.weight = Matrix::zeros(0, fan_in);
                }
            }
        }
        FeatureNetwork::from_layers(r.widths, layers, r.activation)
    }
}

/// Per-layer post-activation values from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Post-activation values of a batched forward pass, one row per sample.
#[derive(Debug, Clone)]
pub struct BatchCache {
    activations: Vec<Matrix>,
}

impl BatchCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache holds the input")
    }
}

/// Gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl NetGradients {
    pub fn zeros_like(net: &FeatureNetwork) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.weight.rows(), l.weight.cols()))
                .collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.data());
            out.push(b.as_slice());
        }
        out
    }
}

impl FeatureNetwork {
    /// Builds a network from explicit layers, validating the shapes.
    pub fn from_layers(widths: Vec<usize>, layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(
                "a network needs at least input and output widths".to_string(),
            ));
        }
        check_len("FeatureNetwork layer count", widths.len() - 1, layers.len())?;
        for (l, layer) in layers.iter().enumerate() {
            check_len("FeatureNetwork weight rows", widths[l + 1], layer.weight.rows())?;
            check_len("FeatureNetwork weight cols", widths[l], layer.weight.cols())?;
            check_len("FeatureNetwork bias", widths[l + 1], layer.bias.len())?;
            if !layer.weight.is_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite("network parameters"));
            }
        }
        Ok(Self {
            widths,
            layers,
            activation,
        })
    }

    /// All-zero parameters.
    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        let layers = widths
            .windows(2)
            .map(|w| Layer {
                weight: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Self::from_layers(widths.to_vec(), layers, activation)
    }

    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn random<R: Rng + ?Sized>(widths: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, activation)?;
        for layer in &mut net.layers {
            let fan_in = layer.weight.cols().max(1);
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            for w in layer.weight.data_mut() {
                *w = rng.random_range(-bound..bound);
            }
            for b in &mut layer.bias {
                *b = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap_or(&0)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Parameter tensors in a fixed order: weight then bias, layer by layer.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(l.weight.data());
            out.push(l.bias.as_slice());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weight.data_mut());
            out.push(l.bias.as_mut_slice());
        }
        out
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("FeatureNetwork::forward input", self.input_dim(), x.len())?;
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.bias.clone();
            for (zi, row) in z.iter_mut().zip(0..layer.weight.rows()) {
                *zi += crate::linalg::dot(layer.weight.row(row), &a);
            }
            if l != last {
                for v in &mut z {
                    *v = self.activation.apply(*v);
                }
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        check_len("FeatureNetwork::forward input", self.input_dim(), x.len())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = &activations[l];
            let mut z = layer.bias.clone();
            for (i, zi) in z.iter_mut().enumerate() {
                *zi += crate::linalg::dot(layer.weight.row(i), prev);
            }
            if l != last {
                for v in &mut z {
                    *v = self.activation.apply(*v);
                }
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    /// Accumulates the gradient of `upstreamᵀ · forward(x)` into `grads` and
    /// returns the gradient with respect to the input.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut NetGradients,
    ) -> Result<Vec<f64>> {
        check_len("FeatureNetwork::backward upstream", self.output_dim(), upstream.len())?;
        let last = self.layers.len() - 1;
        let mut delta = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            if l != last {
                for (d, a) in delta.iter_mut().zip(&cache.activations[l + 1]) {
                    *d *= self.activation.derivative_from_output(*a);
                }
            }
            let a_prev = &cache.activations[l];
            let gw = &mut grads.weights[l];
            for (i, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    axpy(*d, a_prev, gw.row_mut(i));
                }
            }
            for (gb, d) in grads.biases[l].iter_mut().zip(&delta) {
                *gb += d;
            }
            delta = self.layers[l].weight.tr_matvec(&delta)?;
        }
        Ok(delta)
    }

    /// Forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: Matrix) -> Result<BatchCache> {
        check_len("FeatureNetwork::forward_batch input", self.input_dim(), x.cols())?;
        let rows = x.rows();
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Matrix::zeros(rows, layer.bias.len());
            for r in 0..rows {
                z.row_mut(r).copy_from_slice(&layer.bias);
            }
            Matrix::gemm(1.0, &activations[l], false, &layer.weight, true, 1.0, &mut z)?;
            if l != last {
                for v in z.data_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            activations.push(z);
        }
        Ok(BatchCache { activations })
    }

    /// Accumulates the parameter gradient of `Σ_r upstream[r]ᵀ · forward(x[r])`.
    /// The input gradient is not formed.
    pub fn backward_batch(&self, cache: &BatchCache, mut delta: Matrix, grads: &mut NetGradients) -> Result<()> {
        check_len("FeatureNetwork::backward_batch upstream", self.output_dim(), delta.cols())?;
        check_len("FeatureNetwork::backward_batch rows", cache.activations[0].rows(), delta.rows())?;
        let last = self.layers.len() - 1;
        for l in (0..self.layers.len()).rev() {
            if l != last {
                for (d, a) in delta.data_mut().iter_mut().zip(cache.activations[l + 1].data()) {
                    *d *= self.activation.derivative_from_output(*a);
                }
            }
            Matrix::gemm(1.0, &delta, true, &cache.activations[l], false, 1.0, &mut grads.weights[l])?;
            let gb = &mut grads.biases[l];
            for r in 0..delta.rows() {
                for (g, d) in gb.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            if l > 0 {
                let w = &self.layers[l].weight;
                let mut next = Matrix::zeros(delta.rows(), w.cols());
                Matrix::gemm(1.0, &delta, false, w, false, 0.0, &mut next)?;
                delta = next;
            }
        }
        Ok(())
    }

    /// Gradients of `upstreamᵀ · forward(x)` with respect to every parameter and to `x`.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(NetGradients, Vec<f64>)> {
        let cache = self.forward_cached(x)?;
        let mut grads = NetGradients::zeros_like(self);
        let dx = self.backward_accumulate(&cache, upstream, &mut grads)?;
        Ok((grads, dx))
    }
}
