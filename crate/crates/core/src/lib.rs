//! Estimation of the Pareto exponent of an upper tail from tabulated top
//! shares.
//!
//! The estimator matches self-normalised group shares to their Pareto
//! counterparts by continuously updated minimum distance, using the exact
//! asymptotic covariance of sums of order statistics. Around it the crate
//! provides cross-sectional inference (Wald and likelihood-ratio intervals,
//! an overidentification test), conservative panel intervals built from
//! per-year estimates, and a reproducible Monte Carlo harness.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli_io;
pub mod dgp_sim;
pub mod error;
pub mod estimator;
mod linalg;
pub mod optimize;
pub mod panel_inference;
pub mod quantiles;
pub mod tail_moments;

pub use error::{Error, Result};
pub use estimator::{
    estimate_cumde, estimate_simple, CiMethod, ConfidenceInterval, EstimateOptions, EstimationResult,
    TopShareTabulation,
};
pub use tail_moments::{GroupMomentModel, PercentileGrid, TailShape};
