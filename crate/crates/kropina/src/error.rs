//! Error categories shared across the crate.
//!
//! Domain violations are recoverable by design: callers that sample
//! directions must be able to filter vectors that fall outside the cone
//! without aborting the whole batch.

/// Crate-wide error type.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Malformed arguments (wrong dimensions, non-finite entries, empty
    /// sample lists, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A constructor-level constraint failed; the message names the
    /// violated identity.
    #[error("validation failed: {0}")]
    Validation(String),

    /// The base point left the chart's validity region.
    #[error("point outside chart: {0}")]
    OutsideChart(String),

    /// The direction is not in the conic domain (beta <= 0 up to the
    /// domain guard).
    #[error("outside conic domain: beta = {beta:.6e}, |y|_a = {alpha:.6e}")]
    OutsideDomain { beta: f64, alpha: f64 },

    /// Inside the cone but without enough room for the finite-difference
    /// stencils used by curvature operators.
    #[error("too close to the conic boundary: beta = {beta:.6e} < {required:.6e}")]
    NearBoundary { beta: f64, required: f64 },

    /// Flagpole and transverse edge do not span a plane.
    #[error("degenerate flag: {0}")]
    DegenerateFlag(String),

    /// Rejection sampling could not find admissible data.
    #[error("sampling failure: {0}")]
    SamplingFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
