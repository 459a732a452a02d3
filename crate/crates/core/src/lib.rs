//! Entanglement divergences, the convex split construction and catalytic
//! disentangling protocols for small finite-dimensional quantum states.
//!
//! All logarithms are base 2. Infinite divergences are reported as
//! `f64::INFINITY` rather than as errors.

pub mod convexsplit;
pub mod divergences;
pub mod error;
pub mod protocol;
pub mod qmatrix;
pub mod recovery;
pub mod separability;

pub use error::{Error, Result};
mod solver;
