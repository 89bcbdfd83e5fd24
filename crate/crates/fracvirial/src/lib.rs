//! Numerical laboratory for localized virial identities and blowup criteria of
//! the focusing fractional NLS
//!
//! ```text
//! i u_t = (-Delta)^s u - |u|^(2 sigma) u
//! ```
//!
//! on periodic grids (as a proxy for R^N) and on bounded intervals with the
//! exterior Dirichlet fractional Laplacian.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fft;
pub mod grid;
pub mod quadrature;
pub mod fracops;
pub mod cutoff;
pub mod virial;
pub mod groundstate;
pub mod evolve;
pub mod domain;
pub mod io;
pub mod suite;

pub use error::{Error, Result};
pub use grid::{FieldOnGrid, Grid};
pub use quadrature::{MQuadrature, MRule, MScheme};
