//! Exhaustive search over all supports of size `r*M`.
//!
//! Enumerates every mask in lexicographic order, refits each through the
//! Gram cache, and returns both the global minimizer and the full multiset
//! of distortion values (the finite-size entropy data). Enumeration is
//! partitioned across threads by the first selected column; the reduction
//! keeps the lexicographically smallest mask on ties, so results do not
//! depend on the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gram::{GramCache, RefitScratch};
use crate::problem::{ls_refit, rate_to_k, ProblemInstance, SparseSolution, SupportMask};

/// Default enumeration budget in refits.
pub const DEFAULT_EXHAUSTIVE_BUDGET: u64 = 100_000_000;

/// Distortion multiset over all enumerated masks.
#[derive(Debug, Clone)]
pub struct EntropyHistogram {
    /// Sorted refit distortions, one entry per mask.
    pub epsilon_values: Vec<f64>,
    /// Multiplicity of each entry (all ones for the unbinned multiset).
    pub counts: Vec<u64>,
    pub m: usize,
    pub r: f64,
}

impl EntropyHistogram {
    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn min_epsilon(&self) -> f64 {
        self.epsilon_values.first().copied().unwrap_or(f64::NAN)
    }

    /// `ln sum_c exp(-mu * M * eps(c))`, evaluated by log-sum-exp.
    pub fn log_partition(&self, mu: f64) -> f64 {
        let m = self.m as f64;
        let max = self
            .epsilon_values
            .iter()
            .map(|&e| -mu * m * e)
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = self
            .epsilon_values
            .iter()
            .zip(&self.counts)
            .map(|(&e, &c)| c as f64 * (-mu * m * e - max).exp())
            .sum();
        max + sum.ln()
    }

    /// Exact `phi0(mu) = ln Z / M` of this instance.
    pub fn phi0(&self, mu: f64) -> f64 {
        self.log_partition(mu) / self.m as f64
    }

    /// Thermal average of the distortion at inverse temperature `mu`.
    pub fn mean_epsilon(&self, mu: f64) -> f64 {
        let m = self.m as f64;
        let shift = self.log_partition(mu);
        self.epsilon_values
            .iter()
            .zip(&self.counts)
            .map(|(&e, &c)| e * c as f64 * (-mu * m * e - shift).exp())
            .sum()
    }
}

/// `C(n, k)` saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Exhaustive search with the default budget.
pub fn exhaustive_search(
    inst: &ProblemInstance,
    r: f64,
) -> Result<(SparseSolution, EntropyHistogram)> {
    exhaustive_search_with_budget(inst, r, DEFAULT_EXHAUSTIVE_BUDGET)
}

/// Enumerates every `k = r*M` subset of columns, refits each, and returns
/// the minimizer plus the full distortion multiset.
pub fn exhaustive_search_with_budget(
    inst: &ProblemInstance,
    r: f64,
    budget: u64,
) -> Result<(SparseSolution, EntropyHistogram)> {
    let m = inst.m();
    let n = inst.n();
    let k = rate_to_k(r, m)?;
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("support size k={k} outside 1..={n}")));
    }
    let total = binomial(n, k);
    if total > budget {
        return Err(Error::Budget(format!(
            "C({n}, {k}) = {total} refits exceed the budget {budget}"
        )));
    }
    let cache = GramCache::new(inst);

    // partition by the first selected column
    let firsts: Vec<usize> = (0..=n - k).collect();
    let partials: Vec<(Vec<f64>, f64, Vec<usize>)> = firsts
        .par_iter()
        .map(|&first| {
            let mut scratch = RefitScratch::default();
            let mut values = Vec::new();
            let mut best_eps = f64::INFINITY;
            let mut best_mask: Vec<usize> = Vec::new();
            let mut combo: Vec<usize> = (0..k).map(|i| first + i).collect();
            loop {
                let eps = cache
                    .epsilon(&combo, &mut scratch)
                    .expect("refit cannot fail after jitter escalation");
                values.push(eps);
                if eps < best_eps {
                    best_eps = eps;
                    best_mask = combo.clone();
                }
                // advance the suffix (positions 1..k) in lexicographic order
                let mut i = k;
                loop {
                    if i == 1 {
                        i = 0;
                        break;
                    }
                    i -= 1;
                    if combo[i] < n - (k - i) {
                        combo[i] += 1;
                        for j in i + 1..k {
                            combo[j] = combo[j - 1] + 1;
                        }
                        break;
                    }
                }
                if i == 0 {
                    break;
                }
            }
            (values, best_eps, best_mask)
        })
        .collect();

    let mut all_values = Vec::with_capacity(total as usize);
    let mut best_eps = f64::INFINITY;
    let mut best_mask: Vec<usize> = Vec::new();
    for (values, eps, mask) in partials {
        all_values.extend(values);
        // strict comparison in first-column order keeps the lexicographically
        // smallest winner on exact ties
        if eps < best_eps {
            best_eps = eps;
            best_mask = mask;
        }
    }
    debug_assert_eq!(all_values.len() as u64, total);
    all_values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("NaN distortion"));
    let counts = vec![1u64; all_values.len()];

    let mask = SupportMask::from_indices(n, &best_mask)?;
    let solution = ls_refit(inst, &mask)?;
    let histogram = EntropyHistogram { epsilon_values: all_values, counts, m, r };
    Ok((solution, histogram))
}
