//! Fairness-constrained multi-user downlink beamforming.
//!
//! The crate simulates a multi-antenna base station serving single-antenna
//! users over Rayleigh channels, provides closed-form beamformers (MRT, ZF,
//! SLNR and a channel-gain weighted SLNR), and trains an attention network
//! that maximizes sum rate subject to a lower bound on Jain's fairness index
//! using a hinge Lagrangian with dual ascent on the multiplier.
//!
//! Module map:
//!
//! - [`complex_core`]: complex vectors, Hermitian matrices, Cholesky solves.
//! - [`channel`]: scenarios, channel generation, features, `.fbd` datasets.
//! - [`metrics`]: SINR, rates, Jain's index, ECDFs (double precision).
//! - [`baselines`]: MRT, ZF, SLNR, weighted SLNR.
//! - [`autonet`]: autodiff engine, network, Adam, `.fbck` checkpoints.
//! - [`fairness_loss`]: in-graph rates and the hinge Lagrangian.
//! - [`trainer`]: the training loop, evaluation, checkpoint provenance.
//! - [`sweep`]: fairness-target and exponent sweeps, CSV reports.
//! - [`cli`]: the `fairbeam` command line.

// `!(x > 0.0)` is used deliberately throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autonet;
pub mod baselines;
pub mod channel;
pub mod cli;
pub mod complex_core;
pub mod error;
pub mod fairness_loss;
pub mod metrics;
pub mod sweep;
pub mod trainer;

pub use error::{Error, Result};
