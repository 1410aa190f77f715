//! Replica-symmetric equations of state for the exhaustive (l0) method.
//!
//! For fixed rate `r` and inverse temperature `mu` the order parameters
//! satisfy a closed fixed-point system. Two identities are exact and are
//! used to parametrize the iteration:
//!
//! * `chi = r / (1 - r)`,
//! * the conjugate pairs `chi_hat + q_self_hat = mu / (1 + chi)` and
//!   `q_self_hat + q_cross_hat = mu / (1 + chi + mu*(q_self - q_cross))`.
//!
//! That leaves a two-variable damped iteration in `(q_self, q_cross)` with a
//! nested one-dimensional solve for the rate conjugate `r_hat`. All Gaussian
//! integrals go through `ln Y`, so nothing overflows at large `mu`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::replica::quad::{cached_rule, GaussHermite};

/// Default Gauss-Hermite order for the z-integrals.
pub const DEFAULT_QUAD_ORDER: usize = 96;

/// Converged order parameters of the l0 system at one `mu`.
#[derive(Debug, Clone)]
pub struct L0OrderParams {
    pub mu: f64,
    /// Mean square magnitude of the retained coefficients (self overlap Q).
    pub q_self: f64,
    /// Overlap q between two independent solutions on the same instance.
    pub q_cross: f64,
    /// Susceptibility; equals `r / (1 - r)` identically.
    pub chi: f64,
    /// Conjugate of the support-size constraint.
    pub r_hat: f64,
    pub q_self_hat: f64,
    pub q_cross_hat: f64,
    pub chi_hat: f64,
    /// Distortion `eps(mu) = chi_hat / (2 mu^2)`.
    pub epsilon: f64,
    /// Cumulant-generating function density.
    pub phi0: f64,
    /// Entropy density `s = phi0 + mu * eps`.
    pub entropy: f64,
    /// Largest relative residual over the seven stationarity equations.
    pub max_residual: f64,
}

impl L0OrderParams {
    pub fn delta(&self) -> f64 {
        self.q_self - self.q_cross
    }
}

/// Entropy curve `s(eps)` in the parametric form swept by `mu`.
#[derive(Debug, Clone)]
pub struct EntropyCurve {
    pub mu_grid: Vec<f64>,
    pub epsilon_of_mu: Vec<f64>,
    pub s_of_mu: Vec<f64>,
    /// Inverse temperature where the entropy crosses zero.
    pub mu0: f64,
    /// Minimum achievable distortion `eps(mu0)`.
    pub epsilon0: f64,
    /// Distortion of a random support, `(1 - r) sigma_y^2 / 2`.
    pub epsilon_naive: f64,
}

/// Solver for one `(alpha, r, sigma_y2)` triple, reusable across `mu`.
pub struct L0Eos {
    alpha: f64,
    r: f64,
    sigma_y2: f64,
    quad: Arc<GaussHermite>,
}

/// Internal warm-start state.
#[derive(Debug, Clone, Copy)]
pub struct L0Warm {
    q_self: f64,
    q_cross: f64,
    r_hat: f64,
}

const FP_TOL: f64 = 1e-13;
const RESIDUAL_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 40_000;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 34.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl L0Eos {
    pub fn new(alpha: f64, r: f64, sigma_y2: f64) -> Result<Self> {
        Self::with_order(alpha, r, sigma_y2, DEFAULT_QUAD_ORDER)
    }

    pub fn with_order(alpha: f64, r: f64, sigma_y2: f64, order: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Parameter(format!("alpha={alpha} outside (0, 1]")));
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Parameter(format!("r={r} outside (0, 1)")));
        }
        if !(sigma_y2 > 0.0) {
            return Err(Error::Parameter(format!("sigma_y2={sigma_y2} must be positive")));
        }
        if r * alpha >= 1.0 {
            // k = rM must not exceed N = M/alpha
            return Err(Error::Parameter(format!(
                "r={r} exceeds the basis budget N/M = {}",
                1.0 / alpha
            )));
        }
        Ok(L0Eos { alpha, r, sigma_y2, quad: cached_rule(order) })
    }

    /// `ln Y(z)` coefficients for the current iterate: `ln Y = c0 + c2 z^2`.
    fn log_y_coeffs(&self, mu: f64, q_self: f64, q_cross: f64, r_hat: f64) -> (f64, f64) {
        let chi = self.chi();
        let delta = q_self - q_cross;
        let den = 1.0 + chi + mu * delta;
        let c0 = 0.5 * (den / (1.0 + chi)).ln() - 0.5 * r_hat;
        let c2 = 0.5 * mu * (self.sigma_y2 + q_cross) / den;
        (c0, c2)
    }

    fn chi(&self) -> f64 {
        self.r / (1.0 - self.r)
    }

    /// Solves the rate equation for `r_hat` at fixed `(q_self, q_cross)`.
    /// The integral is strictly decreasing in `r_hat`, so bisection after
    /// bracket expansion always lands.
    fn solve_r_hat(&self, mu: f64, q_self: f64, q_cross: f64, guess: f64) -> Result<f64> {
        let rate = |r_hat: f64| {
            let (c0, c2) = self.log_y_coeffs(mu, q_self, q_cross, r_hat);
            self.quad.integrate_gaussian(|z| sigmoid(c0 + c2 * z * z)) / self.alpha - self.r
        };
        let mut lo = guess - 40.0;
        let mut hi = guess + 40.0;
        let mut grow = 80.0;
        while rate(hi) > 0.0 {
            hi += grow;
            grow *= 2.0;
            if hi > 1e7 {
                return Err(Error::Convergence("r_hat bracket ran away upward".into()));
            }
        }
        grow = 80.0;
        while rate(lo) < 0.0 {
            lo -= grow;
            grow *= 2.0;
            if lo < -1e7 {
                return Err(Error::Convergence("r_hat bracket ran away downward".into()));
            }
        }
        for _ in 0..90 {
            let mid = 0.5 * (lo + hi);
            if rate(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn iterate(
        &self,
        mu: f64,
        start: L0Warm,
        damping: f64,
    ) -> Result<(L0Warm, f64)> {
        let mut q_self = start.q_self;
        let mut q_cross = start.q_cross;
        let mut r_hat = start.r_hat;
        let mut last_change = f64::INFINITY;
        for _ in 0..MAX_SWEEPS {
            r_hat = self.solve_r_hat(mu, q_self, q_cross, r_hat)?;
            let (c0, c2) = self.log_y_coeffs(mu, q_self, q_cross, r_hat);
            let i1 = self
                .quad
                .integrate_gaussian(|z| z * z * sigmoid(c0 + c2 * z * z));
            let i2 = self
                .quad
                .integrate_gaussian(|z| {
                    let s = sigmoid(c0 + c2 * z * z);
                    z * z * s * s
                });
            let delta = q_self - q_cross;
            let q_self_new = self.r * delta + (self.sigma_y2 + q_cross) / self.alpha * i1;
            let q_cross_new = (self.sigma_y2 + q_cross) / self.alpha * i2;
            if !q_self_new.is_finite() || !q_cross_new.is_finite() {
                return Err(Error::Convergence("non-finite iterate in l0 EOS".into()));
            }
            last_change = (q_self_new - q_self).abs().max((q_cross_new - q_cross).abs());
            q_self = (1.0 - damping) * q_self + damping * q_self_new;
            q_cross = (1.0 - damping) * q_cross + damping * q_cross_new;
            let scale = q_self.abs().max(1.0);
            if last_change < FP_TOL * scale {
                return Ok((L0Warm { q_self, q_cross, r_hat }, last_change));
            }
        }
        Ok((L0Warm { q_self, q_cross, r_hat }, last_change))
    }

    /// Solves the system at `mu`, optionally warm-started from a nearby
    /// solution. Damping is reduced and the start perturbed on failure.
    pub fn solve(&self, mu: f64, warm: Option<&L0OrderParams>) -> Result<L0OrderParams> {
        if !(mu > 0.0) {
            return Err(Error::Parameter(format!("mu={mu} must be positive")));
        }
        let chi = self.chi();
        let default_start = L0Warm {
            q_self: self.r * self.sigma_y2 / (1.0 - self.r),
            q_cross: 0.5 * self.r * self.sigma_y2 / (1.0 - self.r),
            r_hat: 0.0,
        };
        let start = warm
            .map(|w| L0Warm { q_self: w.q_self, q_cross: w.q_cross, r_hat: w.r_hat })
            .unwrap_or(default_start);
        let mut residual_trace = Vec::new();
        for restart in 0..10 {
            let damping = 0.6 / (1u32 << restart.min(4)) as f64;
            let jig = restart as f64 * 0.17;
            let attempt = L0Warm {
                q_self: start.q_self * (1.0 + 0.5 * jig) + 1e-3 * jig,
                q_cross: (start.q_cross * (1.0 - 0.3 * jig)).max(0.0),
                r_hat: start.r_hat,
            };
            match self.iterate(mu, attempt, damping) {
                Ok((state, _)) => {
                    let sol = self.finish(mu, chi, state);
                    if sol.max_residual <= RESIDUAL_TOL {
                        return Ok(sol);
                    }
                    residual_trace.push(sol.max_residual);
                }
                Err(e) => {
                    if restart == 9 {
                        return Err(e);
                    }
                }
            }
        }
        Err(Error::Convergence(format!(
            "l0 EOS at alpha={}, r={}, mu={mu}: residuals {:?} above {RESIDUAL_TOL}",
            self.alpha, self.r, residual_trace
        )))
    }

    fn finish(&self, mu: f64, chi: f64, state: L0Warm) -> L0OrderParams {
        let L0Warm { q_self, q_cross, r_hat } = state;
        let delta = q_self - q_cross;
        let den = 1.0 + chi + mu * delta;
        let sq = self.sigma_y2 + q_cross;

        let chi_hat = mu * mu * (delta / ((1.0 + chi) * den) + sq / (den * den));
        let q_self_hat = mu * (1.0 / den - mu * sq / (den * den));
        let q_cross_hat = mu * mu * sq / (den * den);
        let epsilon = 0.5 * (delta / ((1.0 + chi) * den) + sq / (den * den));

        let (c0, c2) = self.log_y_coeffs(mu, q_self, q_cross, r_hat);
        let log_term = self
            .quad
            .integrate_gaussian(|z| softplus(c0 + c2 * z * z))
            / self.alpha;
        let phi0 = 0.5 * ((1.0 + chi) / den).ln() - 0.5 * mu * sq / den
            + 0.5 * (r_hat * self.r + q_self_hat * q_self - chi_hat / mu * chi
                + q_cross_hat * q_cross)
            + log_term;
        let entropy = phi0 + mu * epsilon;

        // residuals of the stationarity equations, measured independently
        let rate_int = self.quad.integrate_gaussian(|z| sigmoid(c0 + c2 * z * z)) / self.alpha;
        let i1 = self.quad.integrate_gaussian(|z| z * z * sigmoid(c0 + c2 * z * z));
        let i2 = self.quad.integrate_gaussian(|z| {
            let s = sigmoid(c0 + c2 * z * z);
            z * z * s * s
        });
        let res_rate = (rate_int - self.r).abs() / self.r.max(1e-12);
        let res_chi = (mu * self.r / (chi_hat + q_self_hat) - chi).abs() / chi.max(1.0);
        let q_self_rhs = self.r * delta
            + self.q_weight(q_self_hat, q_cross_hat) * i1 / self.alpha;
        let q_cross_rhs = self.q_weight(q_self_hat, q_cross_hat) * i2 / self.alpha;
        let res_q_self = (q_self_rhs - q_self).abs() / q_self.abs().max(1.0);
        let res_q_cross = (q_cross_rhs - q_cross).abs() / q_cross.abs().max(1.0);
        let max_residual = res_rate.max(res_chi).max(res_q_self).max(res_q_cross);

        L0OrderParams {
            mu,
            q_self,
            q_cross,
            chi,
            r_hat,
            q_self_hat,
            q_cross_hat,
            chi_hat,
            epsilon,
            phi0,
            entropy,
            max_residual,
        }
    }

    /// `q_cross_hat / (q_self_hat + q_cross_hat)^2`, the weight in front of
    /// the z^2 integrals; algebraically equal to `sigma_y2 + q_cross`.
    fn q_weight(&self, q_self_hat: f64, q_cross_hat: f64) -> f64 {
        q_cross_hat / ((q_self_hat + q_cross_hat) * (q_self_hat + q_cross_hat))
    }
}

/// One-shot solve of the l0 equations of state.
pub fn solve_eos_l0(alpha: f64, r: f64, sigma_y2: f64, mu: f64) -> Result<L0OrderParams> {
    L0Eos::new(alpha, r, sigma_y2)?.solve(mu, None)
}

/// Sweeps `mu` over `mu_grid` with warm starts, locates the entropy zero by
/// bisection and returns the parametric curve.
pub fn entropy_curve_l0(
    alpha: f64,
    r: f64,
    sigma_y2: f64,
    mu_grid: &[f64],
) -> Result<EntropyCurve> {
    if mu_grid.len() < 2 {
        return Err(Error::Parameter("mu grid needs at least two points".into()));
    }
    let mut grid = mu_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("mu grid contains NaN"));
    if grid[0] <= 0.0 {
        return Err(Error::Parameter("mu grid must be positive".into()));
    }
    let eos = L0Eos::new(alpha, r, sigma_y2)?;
    let mut eps = Vec::with_capacity(grid.len());
    let mut ent = Vec::with_capacity(grid.len());
    let mut warm: Option<L0OrderParams> = None;
    let mut bracket: Option<(L0OrderParams, L0OrderParams)> = None;
    for &mu in &grid {
        let sol = eos.solve(mu, warm.as_ref())?;
        eps.push(sol.epsilon);
        ent.push(sol.entropy);
        if bracket.is_none() {
            if let Some(prev) = &warm {
                if prev.entropy > 0.0 && sol.entropy <= 0.0 {
                    bracket = Some((prev.clone(), sol.clone()));
                }
            }
        }
        warm = Some(sol);
    }
    let (mut lo, mut hi) = bracket.ok_or_else(|| {
        Error::Range(format!(
            "entropy does not change sign on mu in [{}, {}]; extend the grid upward",
            grid[0],
            grid[grid.len() - 1]
        ))
    })?;
    // bisection in log(mu) to relative width 1e-8
    while hi.mu / lo.mu > 1.0 + 1e-8 {
        let mid = (lo.mu * hi.mu).sqrt();
        let sol = eos.solve(mid, Some(&lo))?;
        if sol.entropy > 0.0 {
            lo = sol;
        } else {
            hi = sol;
        }
    }
    let mu0 = (lo.mu * hi.mu).sqrt();
    let at_root = eos.solve(mu0, Some(&lo))?;
    Ok(EntropyCurve {
        mu_grid: grid,
        epsilon_of_mu: eps,
        s_of_mu: ent,
        mu0,
        epsilon0: at_root.epsilon,
        epsilon_naive: 0.5 * (1.0 - r) * sigma_y2,
    })
}

/// Geometric grid helper used for default entropy sweeps.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2 && lo > 0.0 && hi > lo);
    let step = (hi / lo).powf(1.0 / (points - 1) as f64);
    (0..points).map(|i| lo * step.powi(i as i32)).collect()
}
