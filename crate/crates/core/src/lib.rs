//! Numerics for fast-diffusion extinction: stationary profiles of `-ΔV = cV^p`,
//! the spectrum of `-Δ` in `L²(V^{p-1})`, implicit flows, entropy diagnostics
//! and exponential-rate extraction.
//!
//! Geometry is restricted to an interval or a ball with radial data, so every
//! operator is a symmetric tridiagonal matrix.

pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod grid;
pub mod quadrature;
pub mod rates;
pub mod series;
pub mod spectrum;
pub mod stationary;
pub mod tridiag;

pub use error::{Error, Result};
