//! Posterior sampling over diffusion-solver estimates, corrected by a
//! measurement-anchored Langevin optimizer.
//!
//! Scores come from analytic Gaussian-mixture oracles, so every stage of the
//! sampler can be checked against closed-form posteriors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod measurement;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod posterior;
pub mod rng;
pub mod schedule;
pub mod score;
pub mod signal;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use signal::Signal;
