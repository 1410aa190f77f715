//! Ensemble experiment drivers shared by the command line tool and the
//! acceptance suite.
//!
//! Every driver runs its instances through rayon and collects results in
//! instance order, so outputs depend only on the seeds, never on the thread
//! count. Instance seeds derive from `(base seed, M, instance index)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::mcmc::{default_steps, multi_histogram_phi0, run_exchange_mc, TemperatureLadder};
use crate::problem::{generate_instance, ls_refit, rate_to_k, SupportMask};
use crate::rng::{derive_seed, stream_rng};
use crate::solvers::{amp, binomial, exhaustive_search_with_budget, lasso_solve, omp};
use crate::stats::{bootstrap_median_ci, SizeSeries};

/// One solver result row for JSON export.
#[derive(Debug, Clone, Serialize)]
pub struct SolverRow {
    pub method: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub r: f64,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_ls: Option<f64>,
    pub seed: u64,
    pub iterations: usize,
}

/// Per-instance lasso results: pre-refit distortion, refit distortion, rate.
#[derive(Debug, Clone, Copy)]
pub struct L1Sample {
    pub epsilon1: f64,
    pub epsilon1_ls: f64,
    pub rate: f64,
}

fn instance_seed(base: u64, m: usize, index: usize) -> u64 {
    derive_seed(base, &[m as u64, index as u64])
}

/// Lasso + refit over an instance ensemble at fixed lambda.
pub fn lasso_ensemble(
    m: usize,
    alpha: f64,
    lambda: f64,
    sigma_y2: f64,
    instances: usize,
    base_seed: u64,
) -> Result<Vec<L1Sample>> {
    (0..instances)
        .into_par_iter()
        .map(|i| {
            let inst = generate_instance(m, alpha, sigma_y2, instance_seed(base_seed, m, i))?;
            let (sol, diag) = lasso_solve(&inst, lambda, 1e-9)?;
            let refit = ls_refit(&inst, &sol.support)?;
            Ok(L1Sample {
                epsilon1: sol.epsilon,
                epsilon1_ls: refit.epsilon,
                rate: diag.support_size as f64 / m as f64,
            })
        })
        .collect()
}

/// AMP + refit over an instance ensemble at fixed lambda.
pub fn amp_ensemble(
    m: usize,
    alpha: f64,
    lambda: f64,
    sigma_y2: f64,
    instances: usize,
    base_seed: u64,
) -> Result<Vec<L1Sample>> {
    (0..instances)
        .into_par_iter()
        .map(|i| {
            let inst = generate_instance(m, alpha, sigma_y2, instance_seed(base_seed, m, i))?;
            let (sol, _) = amp(&inst, lambda, 0.5, 1e-10)?;
            let refit = ls_refit(&inst, &sol.support)?;
            Ok(L1Sample {
                epsilon1: sol.epsilon,
                epsilon1_ls: refit.epsilon,
                rate: sol.support.k() as f64 / m as f64,
            })
        })
        .collect()
}

/// OMP distortions over an instance ensemble.
pub fn omp_ensemble(
    m: usize,
    alpha: f64,
    r: f64,
    sigma_y2: f64,
    instances: usize,
    base_seed: u64,
) -> Result<Vec<f64>> {
    (0..instances)
        .into_par_iter()
        .map(|i| {
            let inst = generate_instance(m, alpha, sigma_y2, instance_seed(base_seed, m, i))?;
            Ok(omp(&inst, r)?.epsilon)
        })
        .collect()
}

/// Random-mask refit distortions (the naive method: the selected submatrix
/// is an i.i.d. Gaussian M x rM matrix, identical in law to a basis built
/// with N = rM).
pub fn naive_ensemble(
    m: usize,
    alpha: f64,
    r: f64,
    sigma_y2: f64,
    instances: usize,
    base_seed: u64,
) -> Result<Vec<f64>> {
    let k = rate_to_k(r, m)?;
    (0..instances)
        .into_par_iter()
        .map(|i| {
            let seed = instance_seed(base_seed, m, i);
            let inst = generate_instance(m, alpha, sigma_y2, seed)?;
            let mut rng = stream_rng(seed, 4);
            let mask = SupportMask::random(inst.n(), k, &mut rng)?;
            Ok(ls_refit(&inst, &mask)?.epsilon)
        })
        .collect()
}

/// Builds a size series (median + bootstrap interval per M) from per-size
/// sample generators.
pub fn size_series_from<F>(
    m_values: &[usize],
    quantity: &str,
    base_seed: u64,
    mut sampler: F,
) -> Result<SizeSeries>
where
    F: FnMut(usize) -> Result<Vec<f64>>,
{
    let mut medians = Vec::with_capacity(m_values.len());
    let mut lo = Vec::with_capacity(m_values.len());
    let mut hi = Vec::with_capacity(m_values.len());
    for (idx, &m) in m_values.iter().enumerate() {
        let samples = sampler(m)?;
        let (med, l, h) = bootstrap_median_ci(
            &samples,
            1000,
            0.95,
            derive_seed(base_seed, &[0xb0_07, m as u64, idx as u64]),
        )?;
        medians.push(med);
        lo.push(l);
        hi.push(h);
    }
    SizeSeries::new(m_values.to_vec(), medians, lo, hi, quantity)
}

/// How `phi0` was estimated for one size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phi0Method {
    Exhaustive,
    ExchangeMc,
}

/// Per-size ensemble of `phi0(mu)` values on the ladder grid.
#[derive(Debug, Clone)]
pub struct Phi0Ensemble {
    pub m: usize,
    pub method: Phi0Method,
    /// `[instance][ladder index]`.
    pub phi0: Vec<Vec<f64>>,
    pub medians: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
}

/// Estimates `phi0` on the ladder for an ensemble of instances, through the
/// exact enumeration when it fits in `exhaustive_budget` refits and through
/// exchange MC plus reweighting otherwise.
#[allow(clippy::too_many_arguments)]
pub fn phi0_ensemble(
    m: usize,
    alpha: f64,
    r: f64,
    sigma_y2: f64,
    ladder: &TemperatureLadder,
    steps_override: Option<usize>,
    instances: usize,
    base_seed: u64,
    exhaustive_budget: u64,
) -> Result<Phi0Ensemble> {
    let k = rate_to_k(r, m)?;
    let n = (m as f64 / alpha).round() as usize;
    let use_exhaustive = binomial(n, k) <= exhaustive_budget;
    let method = if use_exhaustive { Phi0Method::Exhaustive } else { Phi0Method::ExchangeMc };
    let steps = steps_override.unwrap_or_else(|| default_steps(r, m));

    let rows: Vec<Vec<f64>> = (0..instances)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let seed = instance_seed(base_seed, m, i);
            let inst = generate_instance(m, alpha, sigma_y2, seed)?;
            if use_exhaustive {
                let (_, hist) = exhaustive_search_with_budget(&inst, r, exhaustive_budget)?;
                Ok(ladder.mu_values().iter().map(|&mu| hist.phi0(mu)).collect())
            } else {
                let run = run_exchange_mc(&inst, r, ladder, steps, seed)?;
                let curve = multi_histogram_phi0(&run, n, k, ladder.mu_values())?;
                Ok(curve.phi0)
            }
        })
        .collect::<Result<_>>()?;

    let t_count = ladder.len();
    let mut medians = Vec::with_capacity(t_count);
    let mut ci_lo = Vec::with_capacity(t_count);
    let mut ci_hi = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let samples: Vec<f64> = rows.iter().map(|row| row[t]).collect();
        let (med, lo, hi) = bootstrap_median_ci(
            &samples,
            1000,
            0.95,
            derive_seed(base_seed, &[0x9a1, m as u64, t as u64]),
        )?;
        medians.push(med);
        ci_lo.push(lo);
        ci_hi.push(hi);
    }
    Ok(Phi0Ensemble { m, method, phi0: rows, medians, ci_lo, ci_hi })
}
