//! Post-hoc range tests for Sharpe ratios.
//!
//! Under a rank-one (equicorrelated) model the pairwise differences of Sharpe
//! ratios behave like differences of independent normals scaled by
//! `√((1 − ρ)/n)`, so the largest difference can be compared with a Tukey
//! studentized range quantile. The crate provides that distribution, the
//! correlation and Sharpe ratio plumbing, the test itself, a seeded Monte
//! Carlo engine for calibration studies, and the command-line front end.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod corr_model;
pub mod error;
pub mod mc;
pub mod posthoc;
pub mod range_dist;
pub mod sr;

pub use error::{Error, Result};
