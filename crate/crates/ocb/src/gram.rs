//! Small dense symmetric positive definite solves and a Gram cache for
//! repeated support refits.
//!
//! The Monte Carlo and exhaustive enumeration paths evaluate the refit
//! distortion for huge numbers of masks on one fixed instance. Caching
//! `G = A^T A`, `b = A^T y` and `||y||^2` reduces each evaluation to a
//! `k x k` Cholesky solve.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::problem::ProblemInstance;

/// In-place Cholesky factorization of a row-major `k x k` matrix, lower
/// triangle. Returns false on a non-positive pivot.
fn cholesky_in_place(g: &mut [f64], k: usize) -> bool {
    for i in 0..k {
        for j in 0..=i {
            let mut s = g[i * k + j];
            for p in 0..j {
                s -= g[i * k + p] * g[j * k + p];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                g[i * k + i] = s.sqrt();
            } else {
                g[i * k + j] = s / g[j * k + j];
            }
        }
    }
    true
}

fn cholesky_solve(l: &[f64], b: &mut [f64], k: usize) {
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i * k + p] * b[p];
        }
        b[i] = s / l[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = b[i];
        for p in i + 1..k {
            s -= l[p * k + i] * b[p];
        }
        b[i] = s / l[i * k + i];
    }
}

/// Solves the symmetric positive (semi)definite system `G x = b`. A plain
/// Cholesky is tried first; on failure the diagonal gets a jitter of
/// `1e-12 * trace`, escalated twice before giving up.
pub(crate) fn solve_spd(g: &[f64], b: &[f64], k: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(g.len(), k * k);
    debug_assert_eq!(b.len(), k);
    let trace: f64 = (0..k).map(|i| g[i * k + i]).sum();
    let mut jitter = 0.0;
    for attempt in 0..4 {
        let mut fac = g.to_vec();
        if jitter > 0.0 {
            for i in 0..k {
                fac[i * k + i] += jitter;
            }
        }
        if cholesky_in_place(&mut fac, k) {
            let mut x = b.to_vec();
            cholesky_solve(&fac, &mut x, k);
            return Ok(x);
        }
        jitter = 1e-12 * trace.max(f64::MIN_POSITIVE) * 100f64.powi(attempt);
    }
    Err(Error::Convergence(format!(
        "cholesky failed on a {k}x{k} normal matrix even with jitter"
    )))
}

/// Cached quadratic forms of one instance for fast per-mask refits.
pub(crate) struct GramCache {
    g: Array2<f64>,
    b: Array1<f64>,
    y_sq: f64,
    m: usize,
}

/// Scratch space for one evaluation thread.
#[derive(Default)]
pub(crate) struct RefitScratch {
    g: Vec<f64>,
    b: Vec<f64>,
}

impl GramCache {
    pub fn new(inst: &ProblemInstance) -> Self {
        let a = inst.basis();
        GramCache {
            g: a.t().dot(&a),
            b: a.t().dot(&inst.y()),
            y_sq: inst.y().dot(&inst.y()),
            m: inst.m(),
        }
    }

    /// Full `N x N` Gram matrix `A^T A`.
    pub fn gram(&self) -> &Array2<f64> {
        &self.g
    }

    /// `A^T y`.
    pub fn b(&self) -> &Array1<f64> {
        &self.b
    }

    /// Refit distortion `eps(c)` for the support given by `cols`.
    ///
    /// Uses `eps = (||y||^2 - b_S^T x_S) / 2M` with `G_S x_S = b_S`, which is
    /// the least-squares optimum value on that support.
    pub fn epsilon(&self, cols: &[usize], scratch: &mut RefitScratch) -> Result<f64> {
        let k = cols.len();
        if k == 0 {
            return Ok(self.y_sq / (2.0 * self.m as f64));
        }
        scratch.g.clear();
        scratch.g.reserve(k * k);
        for &i in cols {
            for &j in cols {
                scratch.g.push(self.g[(i, j)]);
            }
        }
        scratch.b.clear();
        scratch.b.extend(cols.iter().map(|&i| self.b[i]));
        let x = solve_spd(&scratch.g, &scratch.b, k)?;
        let fitted: f64 = x.iter().zip(&scratch.b).map(|(xi, bi)| xi * bi).sum();
        Ok(((self.y_sq - fitted) / (2.0 * self.m as f64)).max(0.0))
    }
}
