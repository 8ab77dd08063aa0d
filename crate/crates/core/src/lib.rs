//! Power-grid dynamics under dynamic load-altering attacks, PMU dataset
//! generation, and capsule-network localization of the attacked load bus.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: case parsing, DC susceptance, reduced state-space model, eigen screen.
//! - [`attack`]: attack scenarios, RK4 simulation, PMU windows, the attack-limit filter.
//! - [`pmu`]: measurement degradations, datasets, and the on-disk dataset container.
//! - [`nn`]: tensors, layers with hand-written backward passes, optimizers, gradient checks.
//! - [`capsnet`]: primary/digit capsules with dynamic routing and the margin loss.
//! - [`baselines`]: MLP, 1D-CNN, and 2D-CNN comparison classifiers.
//! - [`train`]: the shared mini-batch training loop.
//! - [`eval`]: accuracy metric, robustness suites, CSV reports.
//! - [`pipeline`]: the `gen`/`train`/`eval`/`inspect`/`selfcheck` workflows used by the CLI.

// NaN-rejecting range checks read best as `!(x >= 0.0)`
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod baselines;
mod binio;
pub mod capsnet;
pub mod config;
pub mod error;
pub mod eval;
pub mod exec;
pub mod grid;
pub mod nn;
pub mod pipeline;
pub mod pmu;
pub mod rng;
pub mod train;

pub use error::{Error, Result};

/// Nominal system frequency in Hz.
pub const NOMINAL_HZ: f64 = 50.0;
