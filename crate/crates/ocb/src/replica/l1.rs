//! Replica-symmetric equations of state for the l1 method and for the
//! least-squares refit on the l1 support.
//!
//! The l1 system collapses to a single unknown `theta = lambda / sqrt(2
//! chi_p_hat)` once the exact identities `r = erfc(theta)/alpha`,
//! `chi_p = r/(1-r)` and `p_hat = 1/(1+chi_p)` are substituted, leaving one
//! monotone residual equation that bisection solves for any `(alpha,
//! lambda)`. The refit system is solved by a damped fixed point from the
//! near-identity start, which lands on the branch continuously connected to
//! the l1 solution.

use crate::error::{Error, Result};
use crate::replica::special::erfc;

const FRAC_2_SQRT_PI: f64 = 1.1283791670955126;

/// Converged order parameters of the l1 system.
#[derive(Debug, Clone)]
pub struct L1OrderParams {
    pub lambda: f64,
    /// Mean square magnitude of the lasso estimate (P).
    pub p: f64,
    pub chi_p: f64,
    pub p_hat: f64,
    pub chi_p_hat: f64,
    /// Rescaled threshold `lambda / sqrt(2 chi_p_hat)`.
    pub theta: f64,
    /// Compression rate `erfc(theta) / alpha`.
    pub r: f64,
    /// Distortion before the refit, `chi_p_hat / 2`.
    pub epsilon1: f64,
    pub max_residual: f64,
}

/// Converged order parameters of the refit-on-l1-support system.
#[derive(Debug, Clone)]
pub struct L1LsOrderParams {
    /// Cross overlap C between refit coefficients and the lasso estimate.
    pub cross: f64,
    pub chi_cross: f64,
    /// Self overlap Q of the refit coefficients.
    pub refit: f64,
    pub chi_refit: f64,
    pub cross_hat: f64,
    pub chi_cross_hat: f64,
    pub refit_hat: f64,
    pub chi_refit_hat: f64,
    /// Distortion after the refit, `chi_refit_hat / 2`.
    pub epsilon1_ls: f64,
    pub max_residual: f64,
}

/// `(2/sqrt(pi)) exp(-theta^2)`, the Gaussian edge density term.
fn edge(theta: f64) -> f64 {
    FRAC_2_SQRT_PI * (-theta * theta).exp()
}

/// `(1 + 2 theta^2) erfc(theta) - theta (2/sqrt(pi)) exp(-theta^2)`,
/// the soft-threshold second-moment combination. The direct formula loses
/// relative precision above theta ~ 8, where the alternating tail series
/// takes over.
pub(crate) fn soft_moment(theta: f64) -> f64 {
    if theta <= 8.0 {
        (1.0 + 2.0 * theta * theta) * erfc(theta) - theta * edge(theta)
    } else {
        // (exp(-t^2) / (2 sqrt(pi) t^3)) * sum_k (-1)^k (2k+2)! / (k! (4t^2)^k)
        let t2 = theta * theta;
        let mut term = 2.0;
        let mut sum = 2.0;
        for k in 0..60 {
            let next = term * (-1.0) * ((2 * k + 3) * (2 * k + 4)) as f64
                / ((k + 1) as f64 * 4.0 * t2);
            if next.abs() >= term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        (-t2).exp() * sum / (2.0 * std::f64::consts::PI.sqrt() * theta * t2)
    }
}

/// Stationarity residual of the coefficient-norm equation at `theta`.
fn l1_residual(theta: f64, alpha: f64, lambda: f64, sigma_y2: f64) -> f64 {
    let r = erfc(theta) / alpha;
    let chi_p = r / (1.0 - r);
    let chi_p_hat = lambda * lambda / (2.0 * theta * theta);
    let p = chi_p_hat * (1.0 + chi_p) * (1.0 + chi_p) - sigma_y2;
    (p + sigma_y2) * soft_moment(theta) / alpha - p
}

/// Solves the l1 equations of state in the kappa -> 0 limit.
///
/// Returns the order parameters together with the compression rate and the
/// pre-refit distortion.
pub fn solve_eos_l1(alpha: f64, lambda: f64, sigma_y2: f64) -> Result<(L1OrderParams, f64, f64)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!("alpha={alpha} outside (0, 1]")));
    }
    if !(lambda > 0.0) {
        return Err(Error::Parameter(format!("lambda={lambda} must be positive")));
    }
    if !(sigma_y2 > 0.0) {
        return Err(Error::Parameter(format!("sigma_y2={sigma_y2} must be positive")));
    }
    // theta_min: erfc(theta_min) = alpha, the r -> 1 boundary
    let mut lo = 0.0;
    let mut hi = 30.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if erfc(mid) >= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta_min = hi;

    let mut lo = theta_min * (1.0 + 1e-11) + 1e-12;
    let f_lo = l1_residual(lo, alpha, lambda, sigma_y2);
    if f_lo >= 0.0 {
        return Err(Error::Convergence(format!(
            "l1 EOS: unexpected residual sign at the r->1 boundary (alpha={alpha}, lambda={lambda})"
        )));
    }
    let mut hi = (lambda / (2.0 * sigma_y2).sqrt()).max(theta_min + 1.0) * 2.0;
    let mut guard = 0;
    while l1_residual(hi, alpha, lambda, sigma_y2) < 0.0 {
        hi *= 1.6;
        guard += 1;
        if guard > 200 {
            return Err(Error::Convergence(format!(
                "l1 EOS: no bracket for theta (alpha={alpha}, lambda={lambda})"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if l1_residual(mid, alpha, lambda, sigma_y2) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    let r = erfc(theta) / alpha;
    let chi_p = r / (1.0 - r);
    let chi_p_hat = lambda * lambda / (2.0 * theta * theta);
    let p_hat = 1.0 / (1.0 + chi_p);
    let p = chi_p_hat * (1.0 + chi_p) * (1.0 + chi_p) - sigma_y2;
    let epsilon1 = 0.5 * chi_p_hat;

    // residuals of the four stationarity equations
    let res_a = (chi_p_hat - (p + sigma_y2) * p_hat * p_hat).abs() / chi_p_hat.max(1e-12);
    let res_b = (p_hat - 1.0 / (1.0 + chi_p)).abs();
    let res_c = (chi_p - erfc(theta) / (alpha * p_hat)).abs() / chi_p.max(1.0);
    let res_d = ((p + sigma_y2) * soft_moment(theta) / alpha - p).abs() / p.abs().max(1.0);
    let max_residual = res_a.max(res_b).max(res_c).max(res_d);

    let params = L1OrderParams {
        lambda,
        p,
        chi_p,
        p_hat,
        chi_p_hat,
        theta,
        r,
        epsilon1,
        max_residual,
    };
    Ok((params, r, epsilon1))
}

/// Solves the refit equations of state on top of a converged l1 solution,
/// which is held fixed. Returns the order parameters and `epsilon1_ls`.
pub fn solve_eos_l1ls(
    alpha: f64,
    sigma_y2: f64,
    l1: &L1OrderParams,
) -> Result<(L1LsOrderParams, f64)> {
    let p = l1.p;
    let chi_p = l1.chi_p;
    let p_hat = l1.p_hat;
    let chi_p_hat = l1.chi_p_hat;
    let theta = l1.theta;
    let efc = erfc(theta);
    let e = edge(theta);
    let sm = soft_moment(theta);

    // near-identity start: the refit initially mirrors the lasso estimate
    let mut cross = p;
    let mut chi_cross = chi_p;
    let mut refit = p;
    let mut chi_refit = chi_p;

    let mut damping = 0.5;
    let mut last_change = f64::INFINITY;
    let mut converged = false;
    for _ in 0..200_000 {
        let refit_hat = 1.0 / (1.0 + chi_refit);
        let u = chi_cross / (1.0 + chi_p);
        let chi_refit_hat = ((p + sigma_y2) * u * u - 2.0 * (cross + sigma_y2) * u
            + refit
            + sigma_y2)
            / ((1.0 + chi_refit) * (1.0 + chi_refit));
        let chi_cross_hat = (-(p + sigma_y2) * chi_cross / ((1.0 + chi_p) * (1.0 + chi_p))
            + (cross + sigma_y2) / (1.0 + chi_p))
            / (1.0 + chi_refit);
        let cross_hat = -chi_cross / ((1.0 + chi_refit) * (1.0 + chi_p));

        let r1 = chi_cross_hat / chi_p_hat;
        let r2 = cross_hat / p_hat;
        let chi_refit_new = efc / (alpha * refit_hat);
        let refit_new = chi_p_hat / (alpha * refit_hat * refit_hat)
            * ((chi_refit_hat / chi_p_hat - 2.0 * r1 * r2) * efc
                + r2 * r2 * sm
                + theta * r1 * r1 * e);
        let chi_cross_new =
            (-r2 * efc + theta * r1 * e) / (alpha * refit_hat);
        let cross_new = -chi_p_hat / (alpha * refit_hat)
            * ((-r1 / p_hat) * efc + (r2 / p_hat) * sm);

        if !(refit_new.is_finite() && cross_new.is_finite() && chi_cross_new.is_finite()) {
            return Err(Error::Convergence("non-finite iterate in refit EOS".into()));
        }
        last_change = (refit_new - refit)
            .abs()
            .max((cross_new - cross).abs())
            .max((chi_cross_new - chi_cross).abs())
            .max((chi_refit_new - chi_refit).abs());
        refit = (1.0 - damping) * refit + damping * refit_new;
        cross = (1.0 - damping) * cross + damping * cross_new;
        chi_cross = (1.0 - damping) * chi_cross + damping * chi_cross_new;
        chi_refit = (1.0 - damping) * chi_refit + damping * chi_refit_new;
        if last_change < 1e-13 * refit.abs().max(1.0) {
            converged = true;
            break;
        }
        if last_change > 1e6 {
            damping *= 0.5;
            if damping < 1e-3 {
                break;
            }
        }
    }
    if !converged {
        return Err(Error::Convergence(format!(
            "refit EOS stalled (last change {last_change:.3e})"
        )));
    }

    let refit_hat = 1.0 / (1.0 + chi_refit);
    let u = chi_cross / (1.0 + chi_p);
    let chi_refit_hat = ((p + sigma_y2) * u * u - 2.0 * (cross + sigma_y2) * u + refit + sigma_y2)
        / ((1.0 + chi_refit) * (1.0 + chi_refit));
    let chi_cross_hat = (-(p + sigma_y2) * chi_cross / ((1.0 + chi_p) * (1.0 + chi_p))
        + (cross + sigma_y2) / (1.0 + chi_p))
        / (1.0 + chi_refit);
    let cross_hat = -chi_cross / ((1.0 + chi_refit) * (1.0 + chi_p));
    let epsilon1_ls = 0.5 * chi_refit_hat;

    // branch rule: the physical branch has a nonnegative distortion that
    // does not exceed the pre-refit one
    if epsilon1_ls < -1e-10 || epsilon1_ls > l1.epsilon1 * (1.0 + 1e-6) + 1e-12 {
        return Err(Error::Branch(format!(
            "refit EOS landed on epsilon1_ls={epsilon1_ls:.6e} outside [0, epsilon1={:.6e}]",
            l1.epsilon1
        )));
    }

    // identity residuals (42a-b) plus the stationarity of the four unhatted
    // updates, re-evaluated at the converged point
    let res_chi_q = (chi_refit - chi_p).abs() / chi_p.max(1e-12);
    let res_q_hat = (refit_hat - p_hat).abs() / p_hat;
    let r1 = chi_cross_hat / chi_p_hat;
    let r2 = cross_hat / p_hat;
    let res_refit = (chi_p_hat / (alpha * refit_hat * refit_hat)
        * ((chi_refit_hat / chi_p_hat - 2.0 * r1 * r2) * efc + r2 * r2 * sm + theta * r1 * r1 * e)
        - refit)
        .abs()
        / refit.abs().max(1.0);
    let res_cross = (-chi_p_hat / (alpha * refit_hat)
        * ((-r1 / p_hat) * efc + (r2 / p_hat) * sm)
        - cross)
        .abs()
        / cross.abs().max(1.0);
    let res_chi_cross = ((-r2 * efc + theta * r1 * e) / (alpha * refit_hat) - chi_cross).abs()
        / chi_cross.abs().max(1.0);
    let max_residual = res_chi_q
        .max(res_q_hat)
        .max(res_refit)
        .max(res_cross)
        .max(res_chi_cross);

    let params = L1LsOrderParams {
        cross,
        chi_cross,
        refit,
        chi_refit,
        cross_hat,
        chi_cross_hat,
        refit_hat,
        chi_refit_hat,
        epsilon1_ls,
        max_residual,
    };
    Ok((params, epsilon1_ls))
}

/// Finds the lambda whose replica compression rate equals `target_r`,
/// by bisection on the strictly decreasing map `lambda -> r`.
pub fn replica_lambda_for_rate(alpha: f64, target_r: f64, sigma_y2: f64) -> Result<f64> {
    if !(target_r > 0.0 && target_r < 1.0) {
        return Err(Error::Parameter(format!("target rate {target_r} outside (0, 1)")));
    }
    let mut lo = 1e-6;
    let mut hi = 100.0;
    let r_of = |lambda: f64| solve_eos_l1(alpha, lambda, sigma_y2).map(|(_, r, _)| r);
    if r_of(lo)? < target_r {
        return Err(Error::Range(format!(
            "target rate {target_r} unreachable even at lambda={lo}"
        )));
    }
    if r_of(hi)? > target_r {
        return Err(Error::Range(format!(
            "target rate {target_r} unreachable even at lambda={hi}"
        )));
    }
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if r_of(mid)? > target_r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}
