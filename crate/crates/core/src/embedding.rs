//! Linear embedding model `g⁺ = A g(x) + B u`, `x_pred = C g⁺`, with the
//! structured feature map `g(x) = [x; net(x)]` and its training loss.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::nn::{FeatureNetwork, NetGradients};
use crate::training::Transition;

/// Weights of the two penalty terms of the embedding loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Latent one-step consistency.
    pub lambda1: f64,
    /// Decoded state prediction.
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::InvalidArgument("loss weights must be non-negative".to_string()));
        }
        if self.lambda1 == 0.0 && self.lambda2 == 0.0 {
            return Err(Error::InvalidArgument("loss weights cannot both be zero".to_string()));
        }
        Ok(())
    }
}

/// Which parameter groups receive gradients. `C` is structural and never trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamMask {
    pub update_a: bool,
    pub update_b: bool,
    pub update_theta: bool,
}

impl ParamMask {
    pub const ALL: ParamMask = ParamMask {
        update_a: true,
        update_b: true,
        update_theta: true,
    };

    /// Online default: `A` frozen, `B` and the features adapted.
    pub const FREEZE_A: ParamMask = ParamMask {
        update_a: false,
        update_b: true,
        update_theta: true,
    };

    pub const NONE: ParamMask = ParamMask {
        update_a: false,
        update_b: false,
        update_theta: false,
    };

    pub fn is_empty(&self) -> bool {
        !(self.update_a || self.update_b || self.update_theta)
    }
}

impl Default for ParamMask {
    fn default() -> Self {
        Self::FREEZE_A
    }
}

/// Linear embedding model over states of dimension `n` and inputs of dimension `p`.
///
/// The lifted dimension is `N = n + net.output_dim()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub state_dim: usize,
    pub input_dim: usize,
    pub network: FeatureNetwork,
    /// `N x N`.
    pub a: Matrix,
    /// `N x p`.
    pub b: Matrix,
    /// `n x N`, equal to `[I_n 0]`.
    pub c: Matrix,
}

/// Gradients of the embedding loss for the unmasked parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    pub a: Option<Matrix>,
    pub b: Option<Matrix>,
    pub network: Option<NetGradients>,
}

impl ModelGradients {
    /// Tensors in the order of [`EmbeddingModel::trainable_tensors_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        if let Some(a) = &self.a {
            out.push(a.data());
        }
        if let Some(b) = &self.b {
            out.push(b.data());
        }
        if let Some(n) = &self.network {
            out.extend(n.tensors());
        }
        out
    }
}

/// `[I_n 0]` of shape `n x lifted`.
pub fn state_selector(n: usize, lifted: usize) -> Matrix {
    let mut c = Matrix::zeros(n, lifted);
    for i in 0..n.min(lifted) {
        c[(i, i)] = 1.0;
    }
    c
}

impl EmbeddingModel {
    pub fn new(network: FeatureNetwork, a: Matrix, b: Matrix, input_dim: usize) -> Result<Self> {
        let n = network.input_dim();
        let lifted = n + network.output_dim();
        let model = Self {
            state_dim: n,
            input_dim,
            network,
            a,
            b,
            c: state_selector(n, lifted),
        };
        model.validate()?;
        Ok(model)
    }

    /// Model with `A = I`, `B = 0`.
    pub fn with_identity_dynamics(network: FeatureNetwork, input_dim: usize) -> Result<Self> {
        let lifted = network.input_dim() + network.output_dim();
        Self::new(network, Matrix::identity(lifted), Matrix::zeros(lifted, input_dim), input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim;
        let lifted = self.lifted_dim();
        check_len("EmbeddingModel network input", n, self.network.input_dim())?;
        check_len("EmbeddingModel A rows", lifted, self.a.rows())?;
        check_len("EmbeddingModel A cols", lifted, self.a.cols())?;
        check_len("EmbeddingModel B rows", lifted, self.b.rows())?;
        check_len("EmbeddingModel B cols", self.input_dim, self.b.cols())?;
        check_len("EmbeddingModel C rows", n, self.c.rows())?;
        check_len("EmbeddingModel C cols", lifted, self.c.cols())?;
        if !(self.a.is_finite() && self.b.is_finite() && self.c.is_finite()) {
            return Err(Error::NonFinite("embedding model matrices"));
        }
        Ok(())
    }

    pub fn lifted_dim(&self) -> usize {
        self.state_dim + self.network.output_dim()
    }

    /// `g(x) = [x; net(x)]`.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("EmbeddingModel::embed", self.state_dim, x.len())?;
        let mut out = Vec::with_capacity(self.lifted_dim());
        out.extend_from_slice(x);
        out.extend(self.network.forward(x)?);
        Ok(out)
    }

    /// `C ξ`.
    pub fn decode(&self, latent: &[f64]) -> Result<Vec<f64>> {
        self.c.matvec(latent)
    }

    /// `A ξ + B u`.
    pub fn predict_latent(&self, latent: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_len("EmbeddingModel::predict_latent input", self.input_dim, u.len())?;
        let mut out = self.a.matvec(latent)?;
        for (i, o) in out.iter_mut().enumerate() {
            *o += dot(self.b.row(i), u);
        }
        Ok(out)
    }

    /// `C (A g(x) + B u)`.
    pub fn predict_state(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let latent = self.embed(x)?;
        self.decode(&self.predict_latent(&latent, u)?)
    }

    /// Every parameter tensor: `A`, `B`, `C`, then the network tensors.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.a.data(), self.b.data(), self.c.data()];
        out.extend(self.network.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.a.data_mut(), self.b.data_mut(), self.c.data_mut()];
        out.extend(self.network.tensors_mut());
        out
    }

    /// Tensors selected by `mask`, ordered as in [`ModelGradients::tensors`].
    pub fn trainable_tensors_mut(&mut self, mask: ParamMask) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if mask.update_a {
            out.push(self.a.data_mut());
        }
        if mask.update_b {
            out.push(self.b.data_mut());
        }
        if mask.update_theta {
            out.extend(self.network.tensors_mut());
        }
        out
    }

    fn check_transition(&self, t: &Transition) -> Result<()> {
        check_len("transition x", self.state_dim, t.x.len())?;
        check_len("transition u", self.input_dim, t.u.len())?;
        check_len("transition y", self.state_dim, t.y.len())
    }

    /// Per-sample residuals `(A g(x) + B u - g(y), C(A g(x) + B u) - y)`.
    fn residuals(&self, gx: &[f64], u: &[f64], gy: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let pred = self.predict_latent(gx, u)?;
        let e1: Vec<f64> = pred.iter().zip(gy).map(|(p, g)| p - g).collect();
        let mut e2 = self.c.matvec(&pred)?;
        for (e, yi) in e2.iter_mut().zip(y) {
            *e -= yi;
        }
        Ok((e1, e2))
    }

    /// Embedding loss summed over `batch`, without gradients.
    pub fn batch_loss(&self, batch: &[Transition], w: LossWeights) -> Result<f64> {
        w.validate()?;
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut loss = 0.0;
        for t in batch {
            self.check_transition(t)?;
            let gx = self.embed(&t.x)?;
            let gy = self.embed(&t.y)?;
            let (e1, e2) = self.residuals(&gx, &t.u, &gy, &t.y)?;
            loss += w.lambda1 * dot(&e1, &e1) + w.lambda2 * dot(&e2, &e2);
        }
        Ok(loss)
    }

    /// Sum over the batch of
    /// `λ1 ‖A g(x) + B u − g(y)‖² + λ2 ‖C(A g(x) + B u) − y‖²`
    /// and its gradient with respect to the groups enabled in `mask`.
    ///
    /// Feature gradients flow through both `g(x)` and `g(y)`.
    pub fn loss_and_gradients(
        &self,
        batch: &[Transition],
        w: LossWeights,
        mask: ParamMask,
    ) -> Result<(f64, ModelGradients)> {
        w.validate()?;
        if mask.is_empty() {
            return Err(Error::InvalidArgument(
                "parameter mask selects nothing to train".to_string(),
            ));
        }
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = self.state_dim;
        let lifted = self.lifted_dim();
        let mut grad_a = mask.update_a.then(|| Matrix::zeros(lifted, lifted));
        let mut grad_b = mask.update_b.then(|| Matrix::zeros(lifted, self.input_dim));
        let mut grad_net = mask.update_theta.then(|| NetGradients::zeros_like(&self.network));

        for t in batch {
            self.check_transition(t)?;
        }
        // Features of every x and every y in one stacked batched pass.
        let bsz = batch.len();
        let cache = if mask.update_theta {
            let mut xy = Matrix::zeros(2 * bsz, n);
            for (i, t) in batch.iter().enumerate() {
                xy.row_mut(i).copy_from_slice(&t.x);
                xy.row_mut(bsz + i).copy_from_slice(&t.y);
            }
            Some(self.network.forward_batch(xy)?)
        } else {
            None
        };
        let m = lifted - n;
        let mut upstream = grad_net.as_ref().map(|_| Matrix::zeros(2 * bsz, m));

        let mut loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let (gx, gy) = match &cache {
                Some(c) => (
                    [t.x.as_slice(), c.output().row(i)].concat(),
                    [t.y.as_slice(), c.output().row(bsz + i)].concat(),
                ),
                None => (self.embed(&t.x)?, self.embed(&t.y)?),
            };
            let (e1, e2) = self.residuals(&gx, &t.u, &gy, &t.y)?;
            loss += w.lambda1 * dot(&e1, &e1) + w.lambda2 * dot(&e2, &e2);

            // s = ∂loss/∂(A g(x) + B u)
            let mut s: Vec<f64> = e1.iter().map(|e| 2.0 * w.lambda1 * e).collect();
            if w.lambda2 != 0.0 {
                let ct_e2 = self.c.tr_matvec(&e2)?;
                axpy(2.0 * w.lambda2, &ct_e2, &mut s);
            }
            if let Some(ga) = grad_a.as_mut() {
                for (r, si) in s.iter().enumerate() {
                    axpy(*si, &gx, ga.row_mut(r));
                }
            }
            if let Some(gb) = grad_b.as_mut() {
                for (r, si) in s.iter().enumerate() {
                    axpy(*si, &t.u, gb.row_mut(r));
                }
            }
            if let Some(up) = upstream.as_mut() {
                let up_x = self.a.tr_matvec(&s)?;
                up.row_mut(i).copy_from_slice(&up_x[n..]);
                for (u, e) in up.row_mut(bsz + i).iter_mut().zip(&e1[n..]) {
                    *u = -2.0 * w.lambda1 * e;
                }
            }
        }
        if let (Some(gn), Some(c), Some(up)) = (grad_net.as_mut(), cache.as_ref(), upstream) {
            self.network.backward_batch(c, up, gn)?;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("embedding loss"));
        }
        Ok((
            loss,
            ModelGradients {
                a: grad_a,
                b: grad_b,
                network: grad_net,
            },
        ))
    }
}
