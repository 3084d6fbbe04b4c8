//! Numerical toolkit for chains with complete connections.
//!
//! Singleton transition kernels are composed into interval kernels
//! ([`kernels`]); their sensitivity to the past is measured by variations and
//! transport-based estimators ([`analysis`]), which feed the uniqueness
//! criteria and the loss-of-memory, correlation and comparison bounds
//! ([`bounds`]). Every bound has a brute-force counterpart in [`oracle`] that
//! evaluates the left-hand side exactly at desk scale, and [`sim`] samples
//! paths for empirical checks.
//!
//! Infinite pasts are represented by their depth-`R` truncation, so every
//! supremum is a finite maximum over `E^R`.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bounds;
pub mod error;
pub mod kernels;
pub mod oracle;
pub mod random;
pub mod series;
pub mod sim;
pub mod space;

pub use error::{LisError, Result};
pub use kernels::{KernelFamily, KernelSpec, PowerLawNormalization};
pub use space::{Alphabet, Caps, FiniteDistribution, Observable, PastConfig, Window};

/// Library version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
