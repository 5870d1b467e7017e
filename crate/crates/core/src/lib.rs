//! Gaussian covariance-matrix engine for point-to-multipoint continuous-variable
//! QKD over passive optical networks.
//!
//! Covariance matrices are in shot-noise units with quadrature ordering
//! `(x1, p1, x2, p2, ...)`.

pub mod error;
pub mod gaussian;
pub mod network;
pub mod keyrate;
pub mod ledger;
pub mod montecarlo;
pub mod reduction;

pub use error::{Error, Result};
pub use gaussian::{CovMatrix, ModeLabel};
