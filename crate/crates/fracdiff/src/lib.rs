//! Coupled systems of time-fractional diffusion equations.
//!
//! The crate is organised bottom-up:
//!
//! * [`mlf`] evaluates Mittag-Leffler functions (two-parameter and multinomial).
//! * [`spectral`] discretises the elliptic operators and provides their
//!   eigensystems, fractional powers and resolvent families.
//! * [`system`] describes a full initial-boundary value problem and checks the
//!   structural conditions on the coupling matrix.
//! * [`solver`] computes mild solutions by Picard iteration and by an L1 scheme.
//! * [`laplace`] solves the Laplace-domain elliptic system and inverts it along
//!   a sector contour; it also measures long-time decay.
//! * [`inverse`] recovers the fractional orders from a single-point trace and
//!   hosts the maximum-principle machinery behind uniqueness.

pub mod error;
pub mod inverse;
pub mod laplace;
pub mod linalg;
pub mod mlf;
pub mod special;
pub mod spectral;
pub mod solver;
pub mod system;

pub use error::{Error, Result};

/// Library version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
