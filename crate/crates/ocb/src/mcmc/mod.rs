//! Exchange Monte Carlo over support masks.
//!
//! Chains at a ladder of inverse temperatures `mu` sample the Gibbs measure
//! `p(c) ~ exp(-mu E(c))` with `E(c) = M * eps(c)`, the refit distortion of
//! the mask. One MC step is a single pair-flip proposal at every temperature
//! followed by one exchange attempt between every pair of neighbours. The
//! first half of the steps is discarded as burn-in by the estimators.

mod wham;

pub use wham::{multi_histogram_phi0, Phi0Curve};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::{GramCache, RefitScratch};
use crate::problem::{ls_refit, rate_to_k, ProblemInstance, SupportMask};
use crate::rng::stream_rng;

/// Strictly increasing inverse temperatures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemperatureLadder {
    mu: Vec<f64>,
}

impl TemperatureLadder {
    pub fn new(mu_values: Vec<f64>) -> Result<Self> {
        if mu_values.len() < 2 {
            return Err(Error::Parameter("ladder needs at least two temperatures".into()));
        }
        if mu_values[0] <= 0.0 || !mu_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Parameter(
                "ladder must be positive and strictly increasing".into(),
            ));
        }
        Ok(TemperatureLadder { mu: mu_values })
    }

    /// Geometric progression between the endpoints.
    pub fn geometric(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && points >= 2) {
            return Err(Error::Parameter(format!(
                "invalid geometric ladder ({lo}, {hi}, {points})"
            )));
        }
        let step = (hi / lo).powf(1.0 / (points - 1) as f64);
        Self::new((0..points).map(|i| lo * step.powi(i as i32)).collect())
    }

    /// 15 geometric points on [1, 10] for rates up to 0.3, on [1, 35] above.
    pub fn default_for_rate(r: f64) -> Self {
        let hi = if r <= 0.3 { 10.0 } else { 35.0 };
        Self::geometric(1.0, hi, 15).expect("static ladder parameters")
    }

    pub fn mu_values(&self) -> &[f64] {
        &self.mu
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// Default chain length for a given rate and size, following the published
/// schedules (geometric interpolation between tabulated sizes, clamped at
/// the table ends).
pub fn default_steps(r: f64, m: usize) -> usize {
    let table: &[(usize, f64)] = if r <= 0.3 {
        &[(30, 2e4), (35, 3e4), (40, 4e4), (45, 7e4), (50, 10e4)]
    } else {
        &[(20, 2e4), (25, 4e4), (30, 8e4), (35, 15e4), (40, 30e4)]
    };
    let steps = if m <= table[0].0 {
        table[0].1
    } else if m >= table[table.len() - 1].0 {
        table[table.len() - 1].1
    } else {
        let mut out = table[table.len() - 1].1;
        for w in table.windows(2) {
            let ((m0, s0), (m1, s1)) = (w[0], w[1]);
            if m >= m0 && m <= m1 {
                let t = (m - m0) as f64 / (m1 - m0) as f64;
                out = s0 * (s1 / s0).powf(t);
                break;
            }
        }
        out
    };
    steps.round() as usize
}

/// Recorded output of one exchange MC run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McRun {
    /// Energy time series per temperature, one entry per MC step.
    pub energies: Vec<Vec<f64>>,
    /// Exchange acceptance rate per neighbouring pair.
    pub swap_acceptance: Vec<f64>,
    pub steps: usize,
    /// Steps discarded before estimation (half of the run).
    pub burn_in: usize,
    pub ladder: TemperatureLadder,
    pub m: usize,
    pub seed: u64,
}

/// One Metropolis pair-flip proposal: a random selected index trades places
/// with a random unselected one; acceptance is `min(1, exp(-mu dE))` with
/// `E = M * eps` from the least-squares refit. The support size is conserved.
pub fn mc_pair_flip<R: Rng + ?Sized>(
    mask: &SupportMask,
    inst: &ProblemInstance,
    mu: f64,
    rng: &mut R,
) -> Result<SupportMask> {
    let n = mask.len();
    let k = mask.k();
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!(
            "pair flip needs 0 < k < N, got k={k}, N={n}"
        )));
    }
    let ones = mask.ones();
    let zeros: Vec<usize> = (0..n).filter(|&i| !mask.contains(i)).collect();
    let out = ones[rng.random_range(0..ones.len())];
    let into = zeros[rng.random_range(0..zeros.len())];

    let m = inst.m() as f64;
    let current = m * ls_refit(inst, mask)?.epsilon;
    let mut next_ones = ones.clone();
    for slot in next_ones.iter_mut() {
        if *slot == out {
            *slot = into;
        }
    }
    let candidate = SupportMask::from_indices(n, &next_ones)?;
    let proposed = m * ls_refit(inst, &candidate)?.epsilon;
    let delta = proposed - current;
    let accept = delta <= 0.0 || rng.random::<f64>() < (-mu * delta).exp();
    Ok(if accept { candidate } else { mask.clone() })
}

/// One exchange pass: neighbours `(t, t+1)` swap configurations with
/// probability `min(1, exp((mu_{t+1} - mu_t)(E_{t+1} - E_t)))`.
/// Returns the per-pair acceptance flags.
pub fn exchange_step<R: Rng + ?Sized>(
    states: &mut [SupportMask],
    energies: &mut [f64],
    ladder: &TemperatureLadder,
    rng: &mut R,
) -> Result<Vec<bool>> {
    let t_count = ladder.len();
    if states.len() != t_count || energies.len() != t_count {
        return Err(Error::Shape(format!(
            "{} states / {} energies for {} temperatures",
            states.len(),
            energies.len(),
            t_count
        )));
    }
    let mu = ladder.mu_values();
    let mut accepted = Vec::with_capacity(t_count - 1);
    for t in 0..t_count - 1 {
        let exponent = (mu[t + 1] - mu[t]) * (energies[t + 1] - energies[t]);
        let accept = exponent >= 0.0 || rng.random::<f64>() < exponent.exp();
        if accept {
            states.swap(t, t + 1);
            energies.swap(t, t + 1);
        }
        accepted.push(accept);
    }
    Ok(accepted)
}

/// Runs exchange MC at every ladder temperature for `steps` MC steps.
///
/// Each temperature owns an independent RNG stream derived from
/// `(seed, temperature index)`; the exchange pass has its own stream, so the
/// trajectory depends only on the seed.
pub fn run_exchange_mc(
    inst: &ProblemInstance,
    r: f64,
    ladder: &TemperatureLadder,
    steps: usize,
    seed: u64,
) -> Result<McRun> {
    let m = inst.m();
    let n = inst.n();
    let k = rate_to_k(r, m)?;
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!(
            "exchange MC needs 0 < rM < N, got k={k}, N={n}"
        )));
    }
    if steps < 2 {
        return Err(Error::Parameter("need at least two MC steps".into()));
    }
    let t_count = ladder.len();
    let cache = GramCache::new(inst);
    let mut scratch = RefitScratch::default();

    struct Chain {
        selected: Vec<usize>,
        unselected: Vec<usize>,
        energy: f64,
        rng: rand_chacha::ChaCha8Rng,
    }

    let mut chains: Vec<Chain> = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let mut rng = stream_rng(seed, 2 + t as u64);
        let mask = SupportMask::random(n, k, &mut rng)?;
        let selected = mask.ones();
        let unselected: Vec<usize> = (0..n).filter(|&i| !mask.contains(i)).collect();
        let energy = m as f64 * cache.epsilon(&selected, &mut scratch)?;
        chains.push(Chain { selected, unselected, energy, rng });
    }
    let mut exchange_rng = stream_rng(seed, 1);

    let mu = ladder.mu_values();
    let mut energies: Vec<Vec<f64>> = vec![Vec::with_capacity(steps); t_count];
    let mut swap_counts = vec![0usize; t_count - 1];
    let mut candidate = vec![0usize; k];

    for _ in 0..steps {
        for (t, chain) in chains.iter_mut().enumerate() {
            let si = chain.rng.random_range(0..k);
            let uj = chain.rng.random_range(0..n - k);
            candidate.copy_from_slice(&chain.selected);
            candidate[si] = chain.unselected[uj];
            let proposed = m as f64 * cache.epsilon(&candidate, &mut scratch)?;
            let delta = proposed - chain.energy;
            let accept = delta <= 0.0 || chain.rng.random::<f64>() < (-mu[t] * delta).exp();
            if accept {
                std::mem::swap(&mut chain.selected[si], &mut chain.unselected[uj]);
                chain.energy = proposed;
            }
        }
        // exchange once between every pair of neighbours
        for t in 0..t_count - 1 {
            let exponent = (mu[t + 1] - mu[t]) * (chains[t + 1].energy - chains[t].energy);
            let accept = exponent >= 0.0 || exchange_rng.random::<f64>() < exponent.exp();
            if accept {
                let (a, b) = chains.split_at_mut(t + 1);
                std::mem::swap(&mut a[t].selected, &mut b[0].selected);
                std::mem::swap(&mut a[t].unselected, &mut b[0].unselected);
                std::mem::swap(&mut a[t].energy, &mut b[0].energy);
                swap_counts[t] += 1;
            }
        }
        for (t, chain) in chains.iter().enumerate() {
            energies[t].push(chain.energy);
        }
    }

    Ok(McRun {
        energies,
        swap_acceptance: swap_counts
            .iter()
            .map(|&c| c as f64 / steps as f64)
            .collect(),
        steps,
        burn_in: steps / 2,
        ladder: ladder.clone(),
        m,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::generate_instance;
    use crate::solvers::exhaustive_search;

    #[test]
    fn default_step_schedule_matches_published_sizes() {
        assert_eq!(default_steps(0.2, 30), 20_000);
        assert_eq!(default_steps(0.2, 50), 100_000);
        assert_eq!(default_steps(0.4, 40), 300_000);
        assert_eq!(default_steps(0.4, 20), 20_000);
        // clamped below the table
        assert_eq!(default_steps(0.4, 15), 20_000);
    }

    #[test]
    fn ladder_constructors() {
        let l = TemperatureLadder::default_for_rate(0.2);
        assert_eq!(l.len(), 15);
        assert!((l.mu_values()[0] - 1.0).abs() < 1e-12);
        assert!((l.mu_values()[14] - 10.0).abs() < 1e-9);
        let l = TemperatureLadder::default_for_rate(0.4);
        assert!((l.mu_values()[14] - 35.0).abs() < 1e-9);
        assert!(TemperatureLadder::new(vec![1.0, 0.5]).is_err());
    }

    #[test]
    fn zero_mu_accepts_everything() {
        let inst = generate_instance(6, 0.5, 1.0, 9).unwrap();
        let mut rng = stream_rng(3, 0);
        let mut mask = SupportMask::random(12, 3, &mut rng).unwrap();
        // at mu = 0 every proposal is accepted, so the mask must change
        // whenever the proposal differs (which it always does)
        let mut changed = 0;
        for _ in 0..50 {
            let next = mc_pair_flip(&mask, &inst, 0.0, &mut rng).unwrap();
            assert_eq!(next.k(), 3);
            if next != mask {
                changed += 1;
            }
            mask = next;
        }
        assert_eq!(changed, 50);
    }

    #[test]
    fn exchange_accepts_equal_energies() {
        let ladder = TemperatureLadder::new(vec![1.0, 2.0]).unwrap();
        let mut states = vec![SupportMask::empty(4), SupportMask::full(4)];
        let mut energies = vec![1.5, 1.5];
        let mut rng = stream_rng(1, 0);
        let flags = exchange_step(&mut states, &mut energies, &ladder, &mut rng).unwrap();
        assert_eq!(flags, vec![true]);
        assert_eq!(states[0], SupportMask::full(4));
    }

    #[test]
    fn support_size_is_conserved_and_runs_are_reproducible() {
        let inst = generate_instance(10, 0.5, 1.0, 33).unwrap();
        let ladder = TemperatureLadder::geometric(1.0, 10.0, 4).unwrap();
        let run1 = run_exchange_mc(&inst, 0.2, &ladder, 200, 5).unwrap();
        let run2 = run_exchange_mc(&inst, 0.2, &ladder, 200, 5).unwrap();
        assert_eq!(run1.energies, run2.energies);
        assert_eq!(run1.burn_in, 100);
        let run3 = run_exchange_mc(&inst, 0.2, &ladder, 200, 6).unwrap();
        assert_ne!(run1.energies, run3.energies);
    }

    #[test]
    fn chain_samples_the_gibbs_measure() {
        // M=6, N=12, k=2: 66 masks enumerable; compare visит frequencies
        // against exact Gibbs weights with a chi-square statistic
        let inst = generate_instance(6, 0.5, 1.0, 12).unwrap();
        let mu = 1.0;
        let (_, hist) = exhaustive_search(&inst, 2.0 / 6.0).unwrap();
        assert_eq!(hist.total_count(), 66);

        // exact weights per mask need the mask identities; rebuild them
        let mut weights = std::collections::HashMap::new();
        let mut total = 0.0;
        let mut keys = Vec::new();
        for a in 0..12 {
            for b in (a + 1)..12 {
                let mask = SupportMask::from_indices(12, &[a, b]).unwrap();
                let eps = ls_refit(&inst, &mask).unwrap().epsilon;
                let w = (-mu * 6.0 * eps).exp();
                weights.insert((a, b), w);
                keys.push((a, b));
                total += w;
            }
        }

        let mut rng = stream_rng(100, 0);
        let mut mask = SupportMask::random(12, 2, &mut rng).unwrap();
        let mut counts: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let thin = 10;
        let kept = 30_000;
        for _ in 0..2_000 {
            mask = mc_pair_flip(&mask, &inst, mu, &mut rng).unwrap();
        }
        for _ in 0..kept {
            for _ in 0..thin {
                mask = mc_pair_flip(&mask, &inst, mu, &mut rng).unwrap();
            }
            let ones = mask.ones();
            *counts.entry((ones[0], ones[1])).or_default() += 1;
        }
        let mut chi2 = 0.0;
        for key in &keys {
            let expect = kept as f64 * weights[key] / total;
            let got = *counts.get(key).unwrap_or(&0) as f64;
            chi2 += (got - expect) * (got - expect) / expect;
        }
        // 65 dof: the 0.005 quantile is ~99.6; this fails with probability
        // ~0.5% under a correct sampler and the seed is fixed
        assert!(chi2 < 99.6, "chi2 = {chi2}");
    }
}
