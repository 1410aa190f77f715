//! Gauss-Hermite quadrature for Gaussian-measure integrals.
//!
//! Nodes are roots of the physicists' Hermite polynomial, located by
//! interlacing bisection (the roots of order n+1 are separated by those of
//! order n) and polished with Newton steps on the orthonormal recurrence,
//! which stays well scaled up to the orders used here.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// A fixed-order Gauss-Hermite rule.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Orthonormal Hermite value and derivative at `x` for order `n`.
fn hermite_norm(n: usize, x: f64) -> (f64, f64) {
    // h_0 = pi^{-1/4}, h_{k+1} = x sqrt(2/(k+1)) h_k - sqrt(k/(k+1)) h_{k-1}
    let mut hm = 0.0f64;
    let mut h = std::f64::consts::PI.powf(-0.25);
    for k in 0..n {
        let next = x * (2.0 / (k as f64 + 1.0)).sqrt() * h
            - (k as f64 / (k as f64 + 1.0)).sqrt() * hm;
        hm = h;
        h = next;
    }
    // h'_n(x) = sqrt(2n) h_{n-1}(x)
    let dh = if n == 0 { 0.0 } else { (2.0 * n as f64).sqrt() * hm };
    (h, dh)
}

impl GaussHermite {
    /// Builds the rule of the given order (number of nodes).
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        // roots of successive orders interlace; grow order by order
        let mut roots: Vec<f64> = vec![0.0];
        for n in 2..=order {
            let prev = &roots;
            let bound = (2.0 * n as f64 + 1.0).sqrt();
            let mut brackets = Vec::with_capacity(n + 1);
            brackets.push(-bound);
            brackets.extend(prev.iter().copied());
            brackets.push(bound);
            let mut next = Vec::with_capacity(n);
            for w in brackets.windows(2) {
                next.push(find_root(n, w[0], w[1]));
            }
            roots = next;
        }
        let weights = roots
            .iter()
            .map(|&x| {
                let (hm, _) = hermite_norm(order - 1, x);
                1.0 / (order as f64 * hm * hm)
            })
            .collect();
        GaussHermite { nodes: roots, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `int f(x) exp(-x^2) dx`.
    pub fn integrate_physicists<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// `int Dz f(z)` with the standard Gaussian measure
    /// `Dz = dz exp(-z^2/2) / sqrt(2 pi)`.
    pub fn integrate_gaussian<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let scale = std::f64::consts::SQRT_2;
        let norm = std::f64::consts::PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(scale * x))
            .sum::<f64>()
            / norm
    }
}

fn find_root(n: usize, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = hermite_norm(n, lo).0;
    debug_assert!(f_lo * hermite_norm(n, hi).0 <= 0.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let fm = hermite_norm(n, mid).0;
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..4 {
        let (h, dh) = hermite_norm(n, x);
        if dh != 0.0 {
            x -= h / dh;
        }
    }
    x
}

fn rule_cache() -> &'static Mutex<HashMap<usize, Arc<GaussHermite>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared rule of the given order; rules are built once and cached.
pub fn cached_rule(order: usize) -> Arc<GaussHermite> {
    let mut cache = rule_cache().lock().expect("quadrature cache poisoned");
    cache
        .entry(order)
        .or_insert_with(|| Arc::new(GaussHermite::new(order)))
        .clone()
}

/// Gauss-Hermite approximation of `int f(z) exp(-z^2/2)/sqrt(2 pi) dz`.
pub fn gauss_measure_integral<F: Fn(f64) -> f64>(f: F, order: usize) -> f64 {
    cached_rule(order).integrate_gaussian(f)
}
