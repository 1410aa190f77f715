//! The four selection methods: exhaustive search, lasso, orthogonal matching
//! pursuit and approximate message passing.

mod amp;
mod exhaustive;
mod lasso;
mod omp;

pub use amp::{amp, AmpState, DEFAULT_AMP_DAMPING, DEFAULT_AMP_TOL};
pub use exhaustive::{
    binomial, exhaustive_search, exhaustive_search_with_budget, EntropyHistogram,
    DEFAULT_EXHAUSTIVE_BUDGET,
};
pub use lasso::{kkt_residual, lambda_max, lasso_solve, tune_lambda, LassoDiagnostics};
pub use omp::{omp, omp_with_trace, OmpTrace};
