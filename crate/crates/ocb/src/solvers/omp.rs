//! Orthogonal matching pursuit.
//!
//! Runs exactly `r*M` iterations; each picks the unselected column with the
//! largest absolute correlation against the current residual (ties broken by
//! the lowest index) and refits by least squares on the enlarged support.
//! The refit reuses a Gram cache and an incrementally grown Cholesky factor.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::gram::GramCache;
use crate::problem::{rate_to_k, ProblemInstance, SparseSolution, SupportMask};

/// Per-step record for invariant checks.
#[derive(Debug, Clone)]
pub struct OmpTrace {
    /// Columns in selection order.
    pub order: Vec<usize>,
    /// `||y - A x^{(n)}||_2` after each refit.
    pub residual_norms: Vec<f64>,
}

/// Runs OMP at rate `r` and returns the final refit solution.
pub fn omp(inst: &ProblemInstance, r: f64) -> Result<SparseSolution> {
    omp_with_trace(inst, r).map(|(sol, _)| sol)
}

/// OMP with the per-step selection trace.
pub fn omp_with_trace(inst: &ProblemInstance, r: f64) -> Result<(SparseSolution, OmpTrace)> {
    let m = inst.m();
    let n = inst.n();
    let k = rate_to_k(r, m)?;
    if k > m {
        return Err(Error::Parameter(format!(
            "OMP needs r*M <= M, got k={k} > M={m}"
        )));
    }
    let cache = GramCache::new(inst);
    let gram = cache.gram();
    let b_all = cache.b();

    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut in_support = vec![false; n];
    // lower-triangular factor of the selected Gram block, row-major, grows by
    // one row per step
    let mut chol: Vec<f64> = Vec::new();
    let mut coefs: Vec<f64> = Vec::new();
    let mut residual = inst.y().to_owned();
    let mut order = Vec::with_capacity(k);
    let mut norms = Vec::with_capacity(k);

    for _ in 0..k {
        let correlations = inst.basis().t().dot(&residual);
        let mut best = usize::MAX;
        let mut best_val = f64::NEG_INFINITY;
        for j in 0..n {
            if in_support[j] {
                continue;
            }
            let v = correlations[j].abs();
            if v > best_val {
                best_val = v;
                best = j;
            }
        }
        debug_assert!(best != usize::MAX);
        let s = selected.len();
        // new Cholesky row: solve L l = G[selected, best]
        let mut row = vec![0.0; s + 1];
        for (i, &p) in selected.iter().enumerate() {
            let mut v = gram[(p, best)];
            for q in 0..i {
                v -= chol[i * k + q] * row[q];
            }
            row[i] = v / chol[i * k + i];
        }
        let diag_sq = gram[(best, best)] - row[..s].iter().map(|v| v * v).sum::<f64>();
        if diag_sq <= 0.0 {
            // numerically dependent column; fall back to a fresh refit below
            return omp_slow_path(inst, r);
        }
        row[s] = diag_sq.sqrt();
        if chol.len() < (s + 1) * k {
            chol.resize((s + 1) * k, 0.0);
        }
        chol[s * k..s * k + s + 1].copy_from_slice(&row);
        selected.push(best);
        in_support[best] = true;
        order.push(best);

        // solve L L^T c = b_S
        let s = selected.len();
        let mut c: Vec<f64> = selected.iter().map(|&p| b_all[p]).collect();
        for i in 0..s {
            let mut v = c[i];
            for q in 0..i {
                v -= chol[i * k + q] * c[q];
            }
            c[i] = v / chol[i * k + i];
        }
        for i in (0..s).rev() {
            let mut v = c[i];
            for q in i + 1..s {
                v -= chol[q * k + i] * c[q];
            }
            c[i] = v / chol[i * k + i];
        }
        coefs = c;

        residual.assign(&inst.y());
        for (i, &p) in selected.iter().enumerate() {
            residual.scaled_add(-coefs[i], &inst.column(p));
        }
        norms.push(residual.dot(&residual).sqrt());
    }

    let mut x = Array1::zeros(n);
    for (i, &p) in selected.iter().enumerate() {
        x[p] = coefs[i];
    }
    let epsilon = residual.dot(&residual) / (2.0 * m as f64);
    let support = SupportMask::from_indices(n, &selected)?;
    Ok((
        SparseSolution { x, support, epsilon },
        OmpTrace { order, residual_norms: norms },
    ))
}

/// Reference path recomputing each refit from scratch; used when the
/// incremental factorization hits a dependent column.
fn omp_slow_path(inst: &ProblemInstance, r: f64) -> Result<(SparseSolution, OmpTrace)> {
    let m = inst.m();
    let n = inst.n();
    let k = rate_to_k(r, m)?;
    let mut selected: Vec<usize> = Vec::new();
    let mut in_support = vec![false; n];
    let mut residual = inst.y().to_owned();
    let mut order = Vec::new();
    let mut norms = Vec::new();
    let mut last = None;
    for _ in 0..k {
        let correlations = inst.basis().t().dot(&residual);
        let mut best = usize::MAX;
        let mut best_val = f64::NEG_INFINITY;
        for j in 0..n {
            if !in_support[j] && correlations[j].abs() > best_val {
                best_val = correlations[j].abs();
                best = j;
            }
        }
        selected.push(best);
        in_support[best] = true;
        order.push(best);
        let mask = SupportMask::from_indices(n, &selected)?;
        let sol = crate::problem::ls_refit(inst, &mask)?;
        residual = &inst.y() - &inst.basis().dot(&sol.x);
        norms.push(residual.dot(&residual).sqrt());
        last = Some(sol);
    }
    let sol = last.expect("k >= 1");
    Ok((sol, OmpTrace { order, residual_norms: norms }))
}
