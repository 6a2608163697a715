use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter bundle or signal description failed validation.
    #[error("invalid parameter: {0}")]
    Validation(String),

    /// Two signals (or a signal and a kernel) live on different time grids.
    #[error("grid mismatch: {0}")]
    Grid(String),

    /// A junction whose inlets carry no flow at all.
    #[error("degenerate junction: total inflow is zero")]
    DegenerateJunction,

    /// Quadrature or kernel construction did not converge.
    #[error("numeric failure in {stage}: {detail}")]
    Numeric { stage: &'static str, detail: String },

    /// A circuit or block configuration that cannot be evaluated.
    #[error("configuration error: {0}")]
    Config(String),

    /// A steady-state evaluation found no plateau.
    #[error("no plateau: relative slope {relative_slope:.3e} over the trailing window exceeds {limit:.1e}")]
    Convergence { relative_slope: f64, limit: f64 },

    /// Two streams that must merge in step arrive too far apart.
    #[error("alignment error: arrival mismatch {mismatch:.4} s exceeds allowance {allowance:.4} s")]
    Alignment { mismatch: f64, allowance: f64 },

    /// Explicit finite-difference scheme outside its stability region.
    #[error("unstable finite-difference configuration: {0}")]
    Stability(String),
}

pub type Result<T> = std::result::Result<T, Error>;
