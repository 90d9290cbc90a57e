//! Adaptive Koopman-operator model predictive control.
//!
//! The crate is `no_std` and needs only `alloc`. It provides:
//!
//! * [`linalg`], [`nn`], [`optim`]: dense matrices, a small feature network
//!   with reverse-mode gradients, and an Adam optimizer.
//! * [`dynamics`]: the cartpole plant integrated with RK4 under zero-order hold.
//! * [`embedding`]: the linear embedding model `g⁺ = A g(x) + B u`,
//!   `x_pred = C g⁺` with `g(x) = [x; net(x)]` and its training loss.
//! * [`mpc`]: the lifted LQ tracking solver and an iLQR nonlinear MPC.
//! * [`training`]: nominal-MPC data generation and offline fitting.
//! * [`adaptation`]: replay buffer, target-model soft updates and the
//!   adaptive Koopman MPC loop.
//! * [`rff`]: the random-Fourier-feature residual baseline.
//! * [`koopman_form`]: a quadrature check of the separated Koopman form on a
//!   scalar polynomial system.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adaptation;
pub mod controller;
pub mod dynamics;
pub mod embedding;
pub mod error;
pub mod koopman_form;
pub mod linalg;
pub mod mpc;
pub mod nn;
pub mod optim;
pub mod rff;
pub mod training;

pub use adaptation::{AdaptationConfig, AdaptiveKoopmanMpc, ReplayBuffer, TargetPair};
pub use controller::{ControlDecision, Controller, FrozenKoopmanMpc, NominalMpc, Observation};
pub use dynamics::{Cartpole, CartpoleParams, CartpoleState, DiscreteDynamics, LinearDynamics};
pub use embedding::{EmbeddingModel, LossWeights, ParamMask};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use mpc::{IlqrSettings, KoopmanMpc, LqTrackingProblem, MpcSolution, QuadraticCostSpec};
pub use nn::{Activation, FeatureNetwork};
pub use rff::{RffConfig, RffModel, RffMpc};
pub use training::{Dataset, OfflineTrainConfig, Transition};
