//! Sparse approximation over random overcomplete bases.
//!
//! A data vector `y` of dimension `M` is approximated by `A x` where `A` is a
//! random `M x N` basis with `N > M` and `x` keeps only `r*M` nonzero entries.
//! The crate provides:
//!
//! * instance generation, distortion evaluation and least-squares refits
//!   ([`problem`]),
//! * the four selection methods: exhaustive search, lasso with coordinate
//!   descent, orthogonal matching pursuit and approximate message passing
//!   ([`solvers`]),
//! * exchange Monte Carlo over support masks plus multi-histogram reweighting
//!   of the cumulant-generating function ([`mcmc`]),
//! * numerical solutions of the replica-symmetric equations of state that
//!   predict the ideal distortion-rate trade-off ([`replica`]),
//! * finite-size extrapolation and bootstrap intervals ([`stats`]),
//! * a block image compression pipeline scored by PSNR ([`image`]),
//! * reusable experiment drivers behind the command line tool
//!   ([`experiments`]).

pub mod error;
pub mod experiments;
pub mod image;
pub mod mcmc;
pub mod problem;
pub mod replica;
pub mod rng;
pub mod solvers;
pub mod stats;

mod gram;

pub use error::{Error, Result};
pub use problem::{
    distortion, generate_instance, ls_refit, InstanceRecord, ProblemInstance, SparseSolution,
    SupportMask,
};
