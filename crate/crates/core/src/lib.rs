//! Deterministic probability-flow solver for time-local master equations,
//! with stochastic baselines and dense reference integration.

// NaN must fail every range check, hence `!(x > 0.0)` throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod corpus;
pub mod detsolver;
pub mod ensemble;
pub mod error;
pub mod models;
pub mod oracle;
pub mod qcore;
pub mod stochastic;

pub use error::{Error, Result};
