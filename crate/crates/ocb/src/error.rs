//! Crate-wide error type.

use crate::problem::SparseSolution;
use crate::solvers::{AmpState, LassoDiagnostics};

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid parameter combination (non-integral `N = M/alpha`, bad rate, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Dimension mismatch between vectors/matrices/images.
    #[error("shape error: {0}")]
    Shape(String),

    /// Enumeration would exceed the configured refit budget.
    #[error("budget exceeded: {0}; use the mcmc module for sizes beyond exhaustive reach")]
    Budget(String),

    /// Generic iterative solver failure.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// Lasso hit its sweep cap; the best iterate is attached.
    #[error("lasso did not reach kkt residual {tol:.3e} (best {best:.3e} after {sweeps} sweeps)")]
    LassoStalled {
        tol: f64,
        best: f64,
        sweeps: usize,
        solution: Box<SparseSolution>,
        diagnostics: Box<LassoDiagnostics>,
    },

    /// AMP hit its iteration cap; the best iterate is attached.
    #[error("amp did not converge within {iterations} iterations (last step {last_step:.3e})")]
    AmpStalled {
        iterations: usize,
        last_step: f64,
        solution: Box<SparseSolution>,
        state: Box<AmpState>,
    },

    /// AMP iterates blew up; a smaller damping factor usually helps.
    #[error("amp diverged: {0}; retry with a smaller damping factor")]
    Divergence(String),

    /// A root/bracket search left its admissible range.
    #[error("range error: {0}")]
    Range(String),

    /// Non-overlapping energy histograms between neighbouring temperatures.
    #[error("histogram overlap missing between mu={lower_mu} and mu={upper_mu}")]
    Overlap { lower_mu: f64, upper_mu: f64 },

    /// The EOS solver landed on a solution branch not connected to the l1 one.
    #[error("branch jump detected: {0}")]
    Branch(String),

    /// No finite basis size exists below the l1 distortion plateau.
    #[error("plateau error: {0}")]
    Plateau(String),

    /// Rank-deficient or otherwise unusable regression design.
    #[error("fit error: {0}")]
    Fit(String),

    /// Empty or malformed input data.
    #[error("input error: {0}")]
    Input(String),

    /// Underlying I/O failure (image files, CSV output).
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that indicate invalid configuration rather than a
    /// numerical failure. The CLI maps these to exit code 2, the rest to 3.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_)
                | Error::Shape(_)
                | Error::Budget(_)
                | Error::Range(_)
                | Error::Plateau(_)
                | Error::Fit(_)
                | Error::Input(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
