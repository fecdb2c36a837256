//! Local explanation fidelity lab.
//!
//! Explains black-box classifiers around single instances with three
//! pipelines and measures how faithfully each surrogate tracks the model in
//! the explained neighborhood:
//!
//! * `lime`: Gaussian perturbations, kernel weights, weighted linear fit.
//! * `lemon`: samples drawn inside an n-ball around the instance, unweighted
//!   linear fit.
//! * `mlime`: the same n-ball samples fitted with a MARS surrogate.

// `!(v > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blackbox;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod explain;
pub mod fidelity;
pub mod linalg;
pub mod mars;
pub mod sampling;
pub mod selftest;
pub mod surrogate;

pub use error::{Error, Result};
