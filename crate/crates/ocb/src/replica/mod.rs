//! Replica-symmetric equations of state and their consequences.
//!
//! Everything here is a pure function of `(alpha, r or lambda, sigma_y2)`;
//! the solutions predict the infinite-size distortion-rate trade-off that
//! the finite-size simulations extrapolate towards.

mod asympt;
mod l0;
mod l1;
pub mod quad;
pub mod special;

pub use asympt::{
    asymptotics_alpha_to_zero, required_basis_size, BasisSizeEstimate, ScalingMethod,
    ScalingPoint, ScalingReport,
};
pub use l0::{
    entropy_curve_l0, geometric_grid, solve_eos_l0, EntropyCurve, L0Eos, L0OrderParams,
    DEFAULT_QUAD_ORDER,
};
pub use l1::{
    replica_lambda_for_rate, solve_eos_l1, solve_eos_l1ls, L1LsOrderParams, L1OrderParams,
};
pub use quad::{gauss_measure_integral, GaussHermite};
