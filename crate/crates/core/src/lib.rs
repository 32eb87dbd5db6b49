//! Algebraic layer for SU(n+1) Chern-Simons-Higgs vortex systems.
//!
//! The crate builds the Cartan matrix of su(n+1) together with the derived
//! matrices that govern the gauged Toda structure of the vortex equations,
//! using exact rational arithmetic so the algebraic identities hold to the
//! last bit. On top of that it resolves the nonlinear constants constraint:
//! given integral weights of a candidate field configuration, it solves the
//! coupled quadratics that pin down the additive constants of the ansatz.
//!
//! Everything here is dimension-agnostic scalar math on slices; no grids,
//! no transforms. The crate is `no_std`-compatible (with `alloc`) when built
//! with the `libm` feature instead of `std`.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` rejects NaN along with nonpositive values; `x <= 0.0` does
// not. Indexed loops mirror the i/j matrix notation throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod cartan;
pub mod constraints;
pub mod linalg;

mod error;
mod math;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
