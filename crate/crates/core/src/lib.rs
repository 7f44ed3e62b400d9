//! Two-stage inversion of pump-probe spectroscopy.
//!
//! Heterodyne signals are deconvolved into pump-probe response functions by
//! Tikhonov regularization, and the responses are inverted into the
//! excited-state density matrix of the sample. A forward simulator (secular
//! Redfield dynamics, perturbative pump, finite probe) generates test data,
//! and a feasibility analyzer measures how well-posed the state inversion is
//! for larger aggregates.

pub mod bath;
pub mod benchmark;
pub mod config;
pub mod deconv;
pub mod error;
pub mod feasibility;
pub mod forward;
pub mod io;
pub mod model;
pub mod pulse;
pub mod regularize;
pub mod response;
pub mod run;
pub mod tomography;
pub mod units;

pub use error::{Error, Result};
