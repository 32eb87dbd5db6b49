//! Numerical construction of doubly periodic vortex condensates.
//!
//! Builds on `cshv-core` (exact Cartan-matrix algebra and nested constraint
//! resolution) and adds everything that needs an operating system: spectral
//! discretization on a flat torus, the reduced energy and its gradient,
//! a preconditioned quasi-Newton minimizer, config parsing, and file output.

// `!(x > 0.0)` rejects NaN along with nonpositive values; `x <= 0.0` does
// not. Indexed loops mirror the i/j matrix notation throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod energy;
pub mod io;
pub mod minimize;
pub mod torus;

mod error;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
