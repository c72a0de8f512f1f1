//! Multi-scale cross-scale reconstruction for time series anomaly detection.

// Negated float comparisons are how NaN gets rejected in validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crosswindow;
pub mod data;
mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod scoring;
pub mod training;

pub use error::{Error, Result};
