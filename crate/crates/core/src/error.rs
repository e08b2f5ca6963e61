//! Error type shared by mesh construction, norm evaluation, and solvers.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A mesh failed validation (inverted element, dangling face, bad normal).
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// Chart assignment does not cover the boundary, or a chart direction is
    /// inadmissible (some facet faces away from it).
    #[error("chart error: {0}")]
    Chart(String),

    /// A requested field or trace does not lie in the discrete space it must
    /// be expressed in (e.g. trace data outside the discrete trace range).
    #[error("infeasible data: {0}")]
    Infeasible(String),

    /// A map that must be invertible is singular or orientation-reversing.
    #[error("singular map: {0}")]
    SingularMap(String),

    /// Linear solver failure (structurally singular factorization, or the
    /// iterative fallback did not reach the requested residual).
    #[error("solve failed: {0}")]
    Solve(String),

    /// Configuration text was malformed or contained an unknown key.
    #[error("config error: {0}")]
    Config(String),

    /// Verification run was asked to do something outside its validity scope
    /// (e.g. an unbounded-domain inequality on data that does not decay).
    #[error("scope error: {0}")]
    Scope(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
