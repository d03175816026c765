//! Numerical toolkit for the stability of isometric and conformal maps from the
//! unit sphere `S^{n-1}` into `R^n`.
//!
//! All integrals `∮` are averages with respect to the normalized surface measure,
//! and all ball integrals are averages over the unit ball.
//!
//! Module map:
//! - [`quadrature`]: exact moments and quadrature grids on spheres and balls.
//! - [`poly`]: sparse polynomials with exact spherical integration.
//! - [`harmonic_basis`]: scalar and vector spherical harmonics, sphere maps, expansions.
//! - [`operator_a`]: the first-order operator `A`, its eigenspaces and the kernel projection.
//! - [`forms`]: quadratic forms, coercivity constants and Korn's identity on the sphere.
//! - [`deficits`]: principal stretches, deficits, energies and signed volume.
//! - [`moebius`]: Möbius maps, recentering, gauge fixing and nearest rotation / Möbius fits.
//! - [`experiments`]: optimality families, stability sweeps, Taylor checks and rate fits.

pub mod config;
pub mod deficits;
pub mod error;
pub mod experiments;
pub mod forms;
pub mod harmonic_basis;
pub mod moebius;
pub mod operator_a;
pub mod par;
pub mod poly;
pub mod quadrature;
pub mod random;

pub use error::{Error, Result};
