use alloc::string::String;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by construction, design, and simulation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Matrix or vector dimensions do not match the declared layout.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An input that must have full column rank is (numerically) rank deficient.
    #[error("rank deficiency: {0}")]
    Rank(String),

    /// Invalid topology (missing self-loop, asymmetric membership, bad index).
    #[error("invalid topology: {0}")]
    Topology(String),

    /// A matrix expected to be doubly stochastic is not.
    #[error("stochasticity violation: {0}")]
    Stochasticity(String),

    /// The reduced Hessian is not positive definite (curvature assumption fails).
    #[error("curvature violation: {0}")]
    Curvature(String),

    /// The eigenstructure of a combination matrix is inconsistent with the
    /// constraint subspace (wrong unit-eigenvalue multiplicity or defective).
    #[error("eigenstructure violation: {0}")]
    Structure(String),

    /// The combiner feasibility problem admits no solution on this topology.
    #[error("infeasible design: {reason} (residual {residual:.3e} after {iterations} iterations)")]
    Infeasible {
        reason: String,
        residual: f64,
        iterations: usize,
    },

    /// A run produced non-finite values or blew up.
    #[error("divergence at iteration {iteration}: {detail}")]
    Divergence { iteration: u64, detail: String },

    /// An iterative routine failed to reach its tolerance.
    #[error("maximum iterations reached: {0}")]
    MaxIterations(String),

    /// Trajectories fed to an ensemble reducer have inconsistent metadata.
    #[error("ensemble mismatch: {0}")]
    Ensemble(String),

    /// The QR/Schur iteration failed to converge on a general matrix.
    #[error("eigensolver failed to converge: {0}")]
    EigenFailure(String),

    /// Configuration value outside its documented domain.
    #[error("invalid configuration: {0}")]
    Config(String),
}
