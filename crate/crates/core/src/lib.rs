//! Galerkin truncated-Fourier solver for the mean-correction function of the
//! mean-reversion SDE `dR = (θ + σα(X, t))R dt + σR dB`, with an independent
//! Burgers oracle and a Monte Carlo layer for the Girsanov density.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod io;
pub mod oracle;
pub mod sde;
pub mod spectral;

pub use error::{Error, Result};
