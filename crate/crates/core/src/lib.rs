//! Selecting the best among systems whose value is itself an optimization.
//!
//! Each system `i` has value `v_i = max_x E[F_i(x, xi)]` (simulation systems)
//! or `v_i = sup_g E_P[g(X)]` (data-driven systems). Selection policies spend
//! a fixed budget of samples across systems and report the system they
//! believe is best:
//!
//! - [`selection::run_seo_sgd`] / [`selection::run_seo_saa`]: sequential
//!   elimination with SGD or sample average approximation inside each system;
//! - [`selection::run_uniform_sgd`] / [`selection::run_uniform_saa`]: equal
//!   split of the budget;
//! - [`selection::run_ocba`]: OCBA over a discretized decision grid.
//!
//! [`harness`] estimates the probability of correct selection over budget
//! grids, and [`cli`] drives experiments from configuration files.

pub mod cli;
pub mod error;
pub mod harness;
pub mod inner;
pub mod problems;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
pub use selection::SystemId;
