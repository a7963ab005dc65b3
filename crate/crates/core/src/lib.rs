//! Nonparametric test for parallel trends across a panel of locally
//! stationary time series, and clustering of series into maximal groups
//! with parallel trends.
//!
//! The pipeline: local linear smoothing of each series, an L² statistic
//! measuring departures from parallelism, a long-run variance function
//! estimated from residuals, and a simulated Gaussian null distribution.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod kernel_smoothing;
pub mod longrun;
pub mod clustering;
pub mod covariance;
pub mod panel;
pub mod rng;
pub mod sim;
pub mod test_engine;

pub use error::{Error, Result, Stage};
pub use grid::{EvalGrid, GridSpec};
pub use kernel_smoothing::{Bandwidth, KernelSpec};
