//! Origin-destination (OD) demand calibration against road counts.
//!
//! The crate calibrates the expected hourly demand of every OD pair of a road
//! network so that a stochastic traffic simulator reproduces observed counts on
//! a sparse set of measured roads. Three calibrators share one evaluation
//! budget protocol:
//!
//! - [`calibrate::run_linear_metamodel`]: fits a metamodel that combines an
//!   analytic assignment-matrix approximation of the counts with a linear
//!   correction, and solves a bound-constrained quadratic program per iteration.
//! - [`calibrate::run_spsa`]: simultaneous perturbation stochastic approximation.
//! - [`calibrate::run_lam`]: linear assignment method with a simulation-estimated
//!   assignment matrix smoothed by successive averages.
//!
//! The built-in [`simulator`] (Poisson demand, logit route choice, BPR delays)
//! plays the role of the expensive black box. Runnable walkthroughs of each
//! capability live in the crate's `examples/` directory:
//!
//! ```bash
//! cargo run -p odcal --example generate_network
//! cargo run -p odcal --example route_choice
//! cargo run -p odcal --example simulate_counts
//! cargo run -p odcal --example solve_metamodel
//! cargo run -p odcal --example calibrate_metamodel
//! cargo run -p odcal --example compare_methods --release
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod io;
pub mod metamodel;
pub mod network;
pub mod report;
pub mod route_choice;
pub mod simulator;

pub use error::{Error, Result};
