//! Problem instances, support masks and least-squares refits.
//!
//! These are the primitives every solver consumes: a random data vector `y`
//! with i.i.d. `N(0, sigma_y^2)` entries, a random basis `A` with i.i.d.
//! `N(0, 1/M)` entries, the distortion `eps = ||y - A x||^2 / (2M)`, and the
//! refit that minimizes the distortion over coefficients restricted to a
//! fixed support.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram;
use crate::rng::stream_rng;

/// A data vector together with the random overcomplete basis it is encoded in.
///
/// Immutable after construction; cheap to share across threads.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    y: Array1<f64>,
    a: Array2<f64>,
    sigma_y2: f64,
    alpha: f64,
    seed: u64,
}

/// Serializable description of an instance. The matrices are regenerated
/// from the seed, never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: f64,
    pub sigma_y2: f64,
    pub seed: u64,
}

impl ProblemInstance {
    /// Data dimension `M`.
    pub fn m(&self) -> usize {
        self.y.len()
    }

    /// Basis size `N = M / alpha`.
    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma_y2(&self) -> f64 {
        self.sigma_y2
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn basis(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    /// Column `j` of the basis.
    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.a.column(j)
    }

    pub fn record(&self) -> InstanceRecord {
        InstanceRecord {
            m: self.m(),
            n: self.n(),
            alpha: self.alpha,
            sigma_y2: self.sigma_y2,
            seed: self.seed,
        }
    }

    /// Wraps existing data into an instance. Used by pipelines that bring
    /// their own `y` and basis; the statistical invariants of
    /// [`generate_instance`] are then the caller's responsibility.
    pub(crate) fn from_parts(
        y: Array1<f64>,
        a: Array2<f64>,
        sigma_y2: f64,
        alpha: f64,
        seed: u64,
    ) -> Result<Self> {
        if y.len() != a.nrows() {
            return Err(Error::Shape(format!(
                "y has length {}, basis has {} rows",
                y.len(),
                a.nrows()
            )));
        }
        Ok(ProblemInstance { y, a, sigma_y2, alpha, seed })
    }

    /// Rebuilds the instance described by `record`. The matrices come out
    /// bit-identical to the original generation.
    pub fn from_record(record: &InstanceRecord) -> Result<Self> {
        let inst = generate_instance(record.m, record.alpha, record.sigma_y2, record.seed)?;
        if inst.n() != record.n {
            return Err(Error::Parameter(format!(
                "record N={} inconsistent with M={} / alpha={}",
                record.n, record.m, record.alpha
            )));
        }
        Ok(inst)
    }
}

#[cfg(test)]
impl ProblemInstance {
    /// Test-only replacement of the matrices by hand-built ones.
    pub(crate) fn set_matrices_for_tests(&mut self, y: Array1<f64>, a: Array2<f64>) {
        assert_eq!(y.len(), a.nrows());
        self.y = y;
        self.a = a;
    }
}

/// Binary selection vector over the `N` basis columns with exactly `k` ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMask {
    bits: Vec<bool>,
    k: usize,
}

impl SupportMask {
    /// Mask with ones exactly at `indices` (need not be sorted, no duplicates).
    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut bits = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::Parameter(format!("mask index {i} out of range 0..{n}")));
            }
            if bits[i] {
                return Err(Error::Parameter(format!("duplicate mask index {i}")));
            }
            bits[i] = true;
        }
        Ok(SupportMask { bits, k: indices.len() })
    }

    pub fn empty(n: usize) -> Self {
        SupportMask { bits: vec![false; n], k: 0 }
    }

    pub fn full(n: usize) -> Self {
        SupportMask { bits: vec![true; n], k: n }
    }

    /// Uniformly random mask with `k` ones, drawn by partial Fisher-Yates.
    pub fn random<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Self> {
        if k > n {
            return Err(Error::Parameter(format!("cannot place {k} ones in {n} slots")));
        }
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.random_range(i..n);
            pool.swap(i, j);
        }
        Self::from_indices(n, &pool[..k])
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    /// Number of ones.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn contains(&self, i: usize) -> bool {
        self.bits[i]
    }

    /// Indices of the ones, ascending.
    pub fn ones(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).collect()
    }
}

/// A coefficient vector, its support, and the distortion it attains.
#[derive(Debug, Clone)]
pub struct SparseSolution {
    pub x: Array1<f64>,
    pub support: SupportMask,
    pub epsilon: f64,
}

impl SparseSolution {
    /// Builds the solution record for coefficients `x` on `inst`, deriving
    /// the support from the exact nonzeros of `x`.
    pub fn from_coefficients(inst: &ProblemInstance, x: Array1<f64>) -> Result<Self> {
        let eps = distortion(inst, x.view())?;
        let ones: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
        let support = SupportMask::from_indices(x.len(), &ones)?;
        Ok(SparseSolution { x, support, epsilon: eps })
    }
}

/// Converts a compression rate `r` into the exact support count `k = r*M`.
///
/// `r*M` must be integral; no rounding is applied.
pub fn rate_to_k(r: f64, m: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Parameter(format!("rate r={r} outside [0, 1]")));
    }
    let exact = r * m as f64;
    let k = exact.round();
    if (exact - k).abs() > 1e-6 {
        return Err(Error::Parameter(format!(
            "r*M = {exact} is not an integer (r={r}, M={m})"
        )));
    }
    Ok(k as usize)
}

/// Draws a fresh instance with `y ~ N(0, sigma_y2)^M` and `A ~ N(0, 1/M)^{MxN}`,
/// `N = M / alpha`. Identical seeds give bit-identical instances.
pub fn generate_instance(m: usize, alpha: f64, sigma_y2: f64, seed: u64) -> Result<ProblemInstance> {
    if m == 0 {
        return Err(Error::Parameter("M must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!("alpha={alpha} outside (0, 1]")));
    }
    if !(sigma_y2 > 0.0) {
        return Err(Error::Parameter(format!("sigma_y2={sigma_y2} must be positive")));
    }
    let n_exact = m as f64 / alpha;
    let n = n_exact.round();
    if (n_exact - n).abs() > 1e-6 * n.max(1.0) {
        return Err(Error::Parameter(format!(
            "M/alpha = {n_exact} is not an integer (M={m}, alpha={alpha})"
        )));
    }
    let n = n as usize;

    let sigma_y = sigma_y2.sqrt();
    let mut rng_y = stream_rng(seed, 0);
    let y = Array1::from_iter((0..m).map(|_| sigma_y * rng_y.sample::<f64, _>(StandardNormal)));

    let col_sigma = (1.0 / m as f64).sqrt();
    let mut rng_a = stream_rng(seed, 1);
    let mut a = Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            a[(i, j)] = col_sigma * rng_a.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(ProblemInstance { y, a, sigma_y2, alpha, seed })
}

/// Mean squared representation error `||y - A x||^2 / (2M)`.
pub fn distortion(inst: &ProblemInstance, x: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != inst.n() {
        return Err(Error::Shape(format!(
            "coefficient vector has length {}, basis has {} columns",
            x.len(),
            inst.n()
        )));
    }
    let residual = &inst.y - &inst.a.dot(&x);
    Ok(residual.dot(&residual) / (2.0 * inst.m() as f64))
}

/// Least-squares refit on a fixed support: the returned coefficients minimize
/// the distortion over all vectors supported on `mask`.
///
/// Rank-deficient systems (in particular `k > M`) fall back to the
/// minimum-norm solution; the normal matrix gets a jitter of `1e-12 * trace`
/// if a plain Cholesky factorization fails.
pub fn ls_refit(inst: &ProblemInstance, mask: &SupportMask) -> Result<SparseSolution> {
    if mask.len() != inst.n() {
        return Err(Error::Shape(format!(
            "mask has length {}, basis has {} columns",
            mask.len(),
            inst.n()
        )));
    }
    let m = inst.m();
    let n = inst.n();
    let cols = mask.ones();
    let k = cols.len();
    let mut x = Array1::zeros(n);
    if k == 0 {
        let eps = inst.y.dot(&inst.y) / (2.0 * m as f64);
        return Ok(SparseSolution { x, support: mask.clone(), epsilon: eps });
    }

    let mut sub = Array2::zeros((m, k));
    for (c, &j) in cols.iter().enumerate() {
        sub.column_mut(c).assign(&inst.a.column(j));
    }
    let coefs = if k <= m {
        // normal equations on the k x k Gram matrix
        let g = sub.t().dot(&sub);
        let b = sub.t().dot(&inst.y);
        gram::solve_spd(g.as_slice().expect("contiguous"), b.as_slice().expect("contiguous"), k)?
    } else {
        // minimum-norm solution through the M x M outer Gram matrix
        let w = sub.dot(&sub.t());
        let u = gram::solve_spd(
            w.as_slice().expect("contiguous"),
            inst.y.as_slice().expect("contiguous"),
            m,
        )?;
        let u = Array1::from_vec(u);
        sub.t().dot(&u).to_vec()
    };
    for (c, &j) in cols.iter().enumerate() {
        x[j] = coefs[c];
    }
    let residual = &inst.y - &sub.dot(&Array1::from_vec(coefs));
    let eps = residual.dot(&residual) / (2.0 * m as f64);
    Ok(SparseSolution { x, support: mask.clone(), epsilon: eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dimension_arithmetic() {
        let inst = generate_instance(4, 0.5, 1.0, 7).unwrap();
        assert_eq!(inst.m(), 4);
        assert_eq!(inst.n(), 8);
        assert!(generate_instance(10, 0.3, 1.0, 0).is_err());
        assert!(generate_instance(10, 0.5, -1.0, 0).is_err());
        assert!(generate_instance(10, 1.5, 1.0, 0).is_err());
    }

    #[test]
    fn same_seed_bit_identical() {
        let a = generate_instance(16, 0.5, 2.0, 99).unwrap();
        let b = generate_instance(16, 0.5, 2.0, 99).unwrap();
        assert_eq!(a.y.as_slice().unwrap(), b.y.as_slice().unwrap());
        assert_eq!(a.a.as_slice().unwrap(), b.a.as_slice().unwrap());
        let c = generate_instance(16, 0.5, 2.0, 100).unwrap();
        assert_ne!(a.y[0].to_bits(), c.y[0].to_bits());
    }

    #[test]
    fn ensemble_matches_stated_distributions() {
        // sample variance of A entries at M=64 should be 1/64 within 5%
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for seed in 0..10_000u64 {
            let inst = generate_instance(64, 0.5, 1.0, seed).unwrap();
            for &v in inst.a.as_slice().unwrap() {
                sum += v;
                sum_sq += v * v;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let var = sum_sq / count as f64 - mean * mean;
        let target = 1.0 / 64.0;
        assert!(
            (var - target).abs() < 0.05 * target,
            "variance {var} vs target {target}"
        );
    }

    #[test]
    fn distortion_hand_cases() {
        // zero coefficients leave ||y||^2 / 2M
        let inst = generate_instance(8, 0.5, 1.0, 3).unwrap();
        let x = Array1::zeros(inst.n());
        let expect = inst.y().dot(&inst.y()) / 16.0;
        assert_abs_diff_eq!(distortion(&inst, x.view()).unwrap(), expect, epsilon = 1e-15);

        // M=2, y=(1,0), A=I, x=0 -> 0.25
        let mut inst2 = generate_instance(2, 1.0, 1.0, 5).unwrap();
        inst2.y = ndarray::array![1.0, 0.0];
        inst2.a = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
        let eps = distortion(&inst2, ndarray::array![0.0, 0.0].view()).unwrap();
        assert_abs_diff_eq!(eps, 0.25, epsilon = 1e-15);
        // exact fit has zero distortion
        let eps = distortion(&inst2, ndarray::array![1.0, 0.0].view()).unwrap();
        assert_abs_diff_eq!(eps, 0.0, epsilon = 1e-15);

        assert!(distortion(&inst2, ndarray::array![0.0].view()).is_err());
    }

    #[test]
    fn refit_full_rank_square_is_exact() {
        let inst = generate_instance(6, 1.0, 1.0, 11).unwrap();
        let sol = ls_refit(&inst, &SupportMask::full(6)).unwrap();
        assert!(sol.epsilon < 1e-18, "epsilon {}", sol.epsilon);
    }

    #[test]
    fn refit_empty_mask() {
        let inst = generate_instance(6, 0.5, 1.0, 11).unwrap();
        let sol = ls_refit(&inst, &SupportMask::empty(12)).unwrap();
        let expect = inst.y().dot(&inst.y()) / 12.0;
        assert_abs_diff_eq!(sol.epsilon, expect, epsilon = 1e-15);
        assert!(sol.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn refit_matches_scalar_closed_form() {
        // M=2, N=3: every single-column mask has the closed form
        // x = a^T y / ||a||^2, distortion evaluated independently.
        let inst = generate_instance(2, 2.0 / 3.0, 1.0, 21).unwrap();
        assert_eq!(inst.n(), 3);
        for j in 0..3 {
            let mask = SupportMask::from_indices(3, &[j]).unwrap();
            let sol = ls_refit(&inst, &mask).unwrap();
            let a = inst.column(j);
            let coef = a.dot(&inst.y()) / a.dot(&a);
            assert_abs_diff_eq!(sol.x[j], coef, epsilon = 1e-10);
            let res0 = inst.y()[0] - coef * a[0];
            let res1 = inst.y()[1] - coef * a[1];
            let eps = (res0 * res0 + res1 * res1) / 4.0;
            assert_abs_diff_eq!(sol.epsilon, eps, epsilon = 1e-10);
        }
    }

    #[test]
    fn refit_is_optimal_on_its_support() {
        let inst = generate_instance(12, 0.5, 1.0, 31).unwrap();
        let mut rng = crate::rng::stream_rng(77, 0);
        let mask = SupportMask::random(24, 6, &mut rng).unwrap();
        let sol = ls_refit(&inst, &mask).unwrap();
        for trial in 0..50 {
            let mut x = sol.x.clone();
            for &j in &mask.ones() {
                x[j] += 0.1 * ((trial * 31 + j) as f64).sin();
            }
            let eps = distortion(&inst, x.view()).unwrap();
            assert!(eps >= sol.epsilon - 1e-12);
        }
    }

    #[test]
    fn adding_a_column_never_hurts() {
        let inst = generate_instance(10, 0.5, 1.0, 41).unwrap();
        let mut rng = crate::rng::stream_rng(5, 0);
        let mask = SupportMask::random(20, 4, &mut rng).unwrap();
        let base = ls_refit(&inst, &mask).unwrap().epsilon;
        for j in 0..20 {
            if mask.contains(j) {
                continue;
            }
            let mut idx = mask.ones();
            idx.push(j);
            let bigger = SupportMask::from_indices(20, &idx).unwrap();
            let eps = ls_refit(&inst, &bigger).unwrap().epsilon;
            assert!(eps <= base + 1e-12, "adding column {j}: {eps} > {base}");
        }
    }

    #[test]
    fn overcomplete_mask_uses_minimum_norm() {
        // k > M: distortion must be ~0 and the solution finite
        let inst = generate_instance(5, 0.25, 1.0, 51).unwrap();
        let sol = ls_refit(&inst, &SupportMask::full(20)).unwrap();
        assert!(sol.epsilon < 1e-16);
        assert!(sol.x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn record_round_trip() {
        let inst = generate_instance(8, 0.5, 1.5, 123).unwrap();
        let rec = inst.record();
        let json = serde_json::to_string(&rec).unwrap();
        let back: InstanceRecord = serde_json::from_str(&json).unwrap();
        let inst2 = ProblemInstance::from_record(&back).unwrap();
        assert_eq!(inst.y.as_slice().unwrap(), inst2.y.as_slice().unwrap());
        assert_eq!(inst.a.as_slice().unwrap(), inst2.a.as_slice().unwrap());
    }

    #[test]
    fn rate_to_k_enforces_integrality() {
        assert_eq!(rate_to_k(0.5, 10).unwrap(), 5);
        assert_eq!(rate_to_k(0.4, 20).unwrap(), 8);
        assert!(rate_to_k(0.4, 11).is_err());
        assert!(rate_to_k(1.2, 10).is_err());
    }
}
