//! Kernel-regression emulation toolkit for gridded climate output.
//!
//! Three regressors — exact Gaussian process regression, epsilon-insensitive
//! support vector regression and kernel ridge regression — share one kernel
//! algebra and one dense linear-algebra core. Around them sit EOF reduction
//! of spatial fields, a flat binary dataset format (CBX), a seeded synthetic
//! scenario generator and a windowed-RMSE benchmark harness.

pub mod bundle;
pub mod cli;
pub mod data;
pub mod eof;
pub mod error;
pub mod eval;
pub mod gpr;
pub mod kernel;
pub mod krr;
pub mod linalg;
pub mod svr;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
