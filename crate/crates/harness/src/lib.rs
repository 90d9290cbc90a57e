//! Experiment harness for adaptive Koopman MPC on the cartpole: configuration,
//! file formats, closed-loop experiments, numerical self-checks and reports.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod io;
pub mod report;
pub mod verify;
