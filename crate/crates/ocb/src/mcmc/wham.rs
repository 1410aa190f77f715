//! Multi-histogram reweighting of exchange MC energies.
//!
//! The post-burn-in samples of all temperatures are combined through the
//! self-consistent reweighting equations for the relative partition
//! functions, kept unbinned (the exact energy multiset). The absolute
//! normalization comes from `Z(0) = C(N, rM)`: at infinite temperature the
//! partition function just counts masks.

use crate::error::{Error, Result};
use crate::mcmc::McRun;
use crate::solvers::binomial;

/// Reweighted estimates on a grid of inverse temperatures.
#[derive(Debug, Clone)]
pub struct Phi0Curve {
    pub mu: Vec<f64>,
    pub phi0: Vec<f64>,
    /// Thermal mean distortion `<E>_mu / M`.
    pub epsilon: Vec<f64>,
    /// `s(mu) = phi0 + mu * epsilon`.
    pub entropy: Vec<f64>,
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Solves the reweighting equations on `run` and evaluates `phi0`, the mean
/// distortion and the entropy on `mu_out`.
///
/// `n` and `k` fix the normalization `phi0(0) = ln C(n, k) / M`.
pub fn multi_histogram_phi0(
    run: &McRun,
    n: usize,
    k: usize,
    mu_out: &[f64],
) -> Result<Phi0Curve> {
    let t_count = run.ladder.len();
    if run.energies.len() != t_count {
        return Err(Error::Shape("energy series do not match the ladder".into()));
    }
    if t_count < 2 {
        return Err(Error::Parameter("reweighting needs at least two temperatures".into()));
    }
    let mu = run.ladder.mu_values();

    // post-burn-in samples, flattened; per-temperature counts stay equal
    let burn = run.burn_in;
    let mut samples: Vec<f64> = Vec::new();
    let mut counts = Vec::with_capacity(t_count);
    for series in &run.energies {
        if series.len() != run.steps {
            return Err(Error::Shape("ragged energy series".into()));
        }
        let tail = &series[burn..];
        counts.push(tail.len());
        samples.extend_from_slice(tail);
    }

    // neighbouring histograms must overlap for the bridge to be defined
    for t in 0..t_count - 1 {
        let a = &run.energies[t][burn..];
        let b = &run.energies[t + 1][burn..];
        let (a_min, a_max) = min_max(a);
        let (b_min, b_max) = min_max(b);
        if a_min > b_max || b_min > a_max {
            return Err(Error::Overlap { lower_mu: mu[t], upper_mu: mu[t + 1] });
        }
    }

    let ln_counts: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let mut f = vec![0.0f64; t_count];
    let mut denom = vec![0.0f64; samples.len()];
    let mut damping = 1.0f64;
    let mut last_residual = f64::INFINITY;
    let mut converged = false;
    for _ in 0..100_000 {
        for (s, &e) in samples.iter().enumerate() {
            denom[s] = log_sum_exp(
                (0..t_count).map(|u| ln_counts[u] - mu[u] * e - f[u]),
            );
        }
        let mut residual = 0.0f64;
        let mut fresh = vec![0.0f64; t_count];
        for t in 0..t_count {
            fresh[t] = log_sum_exp(
                samples
                    .iter()
                    .zip(&denom)
                    .map(|(&e, &d)| -mu[t] * e - d),
            );
        }
        let gauge = fresh[0];
        for t in 0..t_count {
            let next = f[t] + damping * (fresh[t] - gauge - f[t]);
            residual = residual.max((next - f[t]).abs() / f[t].abs().max(1.0));
            f[t] = next;
        }
        if residual < 1e-10 {
            converged = true;
            break;
        }
        if residual > last_residual * 1.2 {
            damping = (damping * 0.5).max(0.05);
        }
        last_residual = residual;
    }
    if !converged {
        return Err(Error::Convergence(
            "reweighting self-consistency stalled".into(),
        ));
    }
    // final denominators at the converged f
    for (s, &e) in samples.iter().enumerate() {
        denom[s] = log_sum_exp((0..t_count).map(|u| ln_counts[u] - mu[u] * e - f[u]));
    }

    let m = run.m as f64;
    let ln_count_all = ln_binomial(n, k);
    let ln_z = |mu_eval: f64| {
        log_sum_exp(samples.iter().zip(&denom).map(|(&e, &d)| -mu_eval * e - d))
    };
    let ln_z0 = ln_z(0.0);

    let mut phi0 = Vec::with_capacity(mu_out.len());
    let mut eps = Vec::with_capacity(mu_out.len());
    let mut ent = Vec::with_capacity(mu_out.len());
    for &mu_eval in mu_out {
        let lz = ln_z(mu_eval);
        let p = (lz - ln_z0 + ln_count_all) / m;
        // <E>_mu via normalized weights
        let mut num = 0.0;
        let mut den = 0.0;
        for (&e, &d) in samples.iter().zip(&denom) {
            let w = (-mu_eval * e - d - lz).exp();
            num += e * w;
            den += w;
        }
        let mean_e = num / den;
        phi0.push(p);
        eps.push(mean_e / m);
        ent.push(p + mu_eval * mean_e / m);
    }
    Ok(Phi0Curve { mu: mu_out.to_vec(), phi0, epsilon: eps, entropy: ent })
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// `ln C(n, k)` without overflow (exact for the sizes used here).
fn ln_binomial(n: usize, k: usize) -> f64 {
    let b = binomial(n, k);
    if b < u64::MAX {
        (b as f64).ln()
    } else {
        // Stirling fallback for astronomically large counts
        let lf = |x: usize| -> f64 {
            (1..=x).map(|i| (i as f64).ln()).sum()
        };
        lf(n) - lf(k) - lf(n - k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::{run_exchange_mc, TemperatureLadder};
    use crate::problem::generate_instance;
    use crate::solvers::exhaustive_search;

    #[test]
    fn phi0_at_zero_is_the_mask_count() {
        let inst = generate_instance(10, 0.5, 1.0, 3).unwrap();
        let ladder = TemperatureLadder::geometric(1.0, 20.0, 8).unwrap();
        let run = run_exchange_mc(&inst, 0.4, &ladder, 4000, 7).unwrap();
        let curve = multi_histogram_phi0(&run, 20, 4, &[0.0]).unwrap();
        let expect = (binomial(20, 4) as f64).ln() / 10.0;
        assert!((curve.phi0[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn reweighting_matches_exhaustive_at_small_size() {
        // M=10, r=0.4: C(20,4) = 4845 masks; exhaustive phi0 is exact
        let inst = generate_instance(10, 0.5, 1.0, 21).unwrap();
        let ladder = TemperatureLadder::geometric(1.0, 35.0, 15).unwrap();
        let run = run_exchange_mc(&inst, 0.4, &ladder, 20_000, 9).unwrap();
        let (_, hist) = exhaustive_search(&inst, 0.4).unwrap();
        let curve = multi_histogram_phi0(&run, 20, 4, ladder.mu_values()).unwrap();
        for (i, &mu) in ladder.mu_values().iter().enumerate() {
            let exact = hist.phi0(mu);
            assert!(
                (curve.phi0[i] - exact).abs() < 1e-2,
                "mu={mu}: wham {} vs exact {exact}",
                curve.phi0[i]
            );
        }
    }

    #[test]
    fn reweighting_back_to_a_chain_reproduces_its_mean_energy() {
        let inst = generate_instance(12, 0.5, 1.0, 5).unwrap();
        let ladder = TemperatureLadder::geometric(1.0, 20.0, 10).unwrap();
        let run = run_exchange_mc(&inst, 0.25, &ladder, 20_000, 13).unwrap();
        let curve = multi_histogram_phi0(&run, 24, 3, ladder.mu_values()).unwrap();
        for (t, &mu) in ladder.mu_values().iter().enumerate() {
            let tail = &run.energies[t][run.burn_in..];
            let mean: f64 = tail.iter().sum::<f64>() / tail.len() as f64;
            // crude standard error using batches of 100
            let batches: Vec<f64> = tail
                .chunks(100)
                .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                .collect();
            let bmean = batches.iter().sum::<f64>() / batches.len() as f64;
            let var = batches.iter().map(|b| (b - bmean) * (b - bmean)).sum::<f64>()
                / (batches.len().max(2) - 1) as f64;
            let se = (var / batches.len() as f64).sqrt().max(1e-4);
            let reweighted = curve.epsilon[t] * 12.0;
            assert!(
                (reweighted - mean).abs() < 2.0 * se + 5e-3,
                "mu={mu}: reweighted {reweighted} vs chain mean {mean} (se {se})"
            );
        }
    }

    #[test]
    fn entropy_is_concave_within_noise() {
        let inst = generate_instance(12, 0.5, 1.0, 31).unwrap();
        let ladder = TemperatureLadder::geometric(1.0, 25.0, 12).unwrap();
        let run = run_exchange_mc(&inst, 0.25, &ladder, 30_000, 3).unwrap();
        // dense grid in decreasing epsilon order
        let grid: Vec<f64> = (0..30).map(|i| 1.0 + i as f64).collect();
        let curve = multi_histogram_phi0(&run, 24, 3, &grid).unwrap();
        let mut pts: Vec<(f64, f64)> = curve
            .epsilon
            .iter()
            .copied()
            .zip(curve.entropy.iter().copied())
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pts.windows(3) {
            let (x0, y0) = w[0];
            let (x1, y1) = w[1];
            let (x2, y2) = w[2];
            if x2 - x0 < 1e-9 {
                continue;
            }
            let interp = y0 + (y2 - y0) * (x1 - x0) / (x2 - x0);
            assert!(
                y1 >= interp - 5e-3,
                "entropy dips below its chord at eps={x1}: {y1} < {interp}"
            );
        }
    }

    #[test]
    fn disjoint_histograms_raise_overlap_error() {
        let ladder = TemperatureLadder::new(vec![1.0, 2.0]).unwrap();
        let run = McRun {
            energies: vec![vec![10.0; 100], vec![1.0; 100]],
            swap_acceptance: vec![0.0],
            steps: 100,
            burn_in: 50,
            ladder: ladder.clone(),
            m: 10,
            seed: 0,
        };
        match multi_histogram_phi0(&run, 20, 4, &[1.0]) {
            Err(Error::Overlap { lower_mu, upper_mu }) => {
                assert_eq!((lower_mu, upper_mu), (1.0, 2.0));
            }
            other => panic!("expected OverlapError, got {other:?}"),
        }
    }
}
