//! Core library for Bayesian causal forest estimation: typed tabular data,
//! regression-tree forests with backfitting MCMC, BART and two-forest causal
//! fits, linear shrinkage-bias analysis, simulation designs, and a
//! benchmarking harness.

pub mod bart;
pub mod bcf;
pub mod bench;
pub mod data;
pub mod dgp;
pub mod error;
pub mod forest;
pub mod ric;
pub mod slice;
pub mod stats;
pub mod summarize;
pub mod tree;

pub use error::{Error, Result};
