//! Sparse additive log-intensity estimation for counting processes.
//!
//! The log-intensity `g(X(t))` of a point process driven by a piecewise-constant
//! covariate path is estimated as a weighted-ℓ1-constrained sum of dictionary
//! atoms, by Frank-Wolfe maximization of the exact likelihood.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dictionary;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fw;
pub mod hawkes;
pub mod likelihood;
pub mod model_io;
mod optim;
pub mod select;
pub mod sim;
pub mod timeline;

pub use error::{Error, Result};
