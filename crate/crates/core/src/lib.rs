//! Steady-state waiting times of the lowest accumulating-priority class in a
//! Lévy-driven single-server queue, together with two simulation oracles.
//!
//! * [`levy`] - subordinator inputs: exponents, moments, samplers.
//! * [`analytic`] - closed-form transforms (workload, overtaking exponent and
//!   its inverse, particle and customer waiting-time LSTs, mean values).
//! * [`inversion`] - Gaver-Stehfest CDF inversion and quantiles.
//! * [`overtaking`] - Monte Carlo first-passage oracle for the overtaking
//!   recursion.
//! * [`des`] - discrete-event simulator of the accumulating-priority queue.
//! * [`cli`] - the `aplevy` command-line front end.

pub mod analytic;
pub mod cli;
pub mod des;
pub mod error;
pub mod inversion;
pub mod levy;
pub mod overtaking;
pub mod precision;
pub mod stats;

pub use analytic::{ApClass, ApModel, MeanWaits, TransformValue};
pub use error::{Error, Result};
pub use levy::{Component, JumpDist, PathGrid, SubordinatorSpec};

/// Version string embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
