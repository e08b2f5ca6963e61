//! Numerical verification toolkit for quantitative trace, extension, and
//! transmission estimates on Lipschitz domains.
//!
//! The crate is organized around a chain of explicit constants: the Lipschitz
//! character of a domain (slope `M`, opening angle `theta`, chart floor
//! `beta`), the bump-derived Fourier extension constant `k1`, the exterior
//! Calderon operator of a sphere, and the coercivity constants of a lossy
//! material. Each module both *computes* the objects involved (meshes, norms,
//! traces, operators, finite-element solutions) and *checks* the inequalities
//! tying them together, reporting left side, right side, the constants used,
//! and the resulting margin.
//!
//! Everything is deterministic: random suites draw from a seeded generator,
//! assembly orders are fixed, and reports serialize with stable formatting so
//! a run can be diffed bit-for-bit against a reference.

pub mod config;
pub mod error;
pub mod report;
pub mod rng;
pub mod sobolev;
pub mod traces;

pub mod quad;

pub mod geometry;

pub mod fem;

pub use error::Error;
pub use report::BoundCheckReport;

/// Convenient result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
