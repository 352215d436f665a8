//! Functional Gaussian graphical models for multivariate functional data
//! under partial separability.
//!
//! The estimation pipeline is:
//!
//! 1. [`fdata`]: cross-sectional means and the pooled covariance kernel.
//! 2. [`eigenbasis`]: the pooled eigenbasis, truncation, and per-basis score
//!    correlation matrices.
//! 3. [`jgl`]: joint graphical lasso over the correlation matrices.
//! 4. [`graphs`]: per-basis edge sets, their union, and recovery metrics;
//!    [`path`] sweeps the penalty and scores ROC curves.
//!
//! [`simgen`] generates synthetic ground truth and samples, and
//! [`diagnostics`] probes whether partial separability is plausible.

pub mod diagnostics;
pub mod eigenbasis;
pub mod error;
pub mod fdata;
pub mod graphs;
pub mod jgl;
pub mod path;
pub mod pipeline;
pub mod simgen;

pub use error::{Error, Result};
