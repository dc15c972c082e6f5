//! Single-subject (n-of-1) causal analysis of self-tracked time series.
//!
//! The engine turns daily weight and activity logs into a weekly outcome and
//! exposure series, partitions it into exposure periods with changepoint
//! detection, dichotomizes the exposure into a binary treatment, fits a
//! random-forest outcome model on lagged predictors, and marginalizes its
//! predictions (g-formula) into per-week mean potential outcomes and the
//! average period treatment effect (APTE). A simulator with a
//! forced-assignment oracle supplies ground truth for verification.

pub mod changepoint;
pub mod config;
pub mod design;
pub mod error;
pub mod estimator;
pub mod forest;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod seed;
pub mod series;
pub mod simulate;
pub mod stationarity;
mod stats;

pub use error::{Error, ErrorKind, Result};
