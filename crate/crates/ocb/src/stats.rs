//! Finite-size extrapolation and bootstrap uncertainty.
//!
//! Ensemble medians at a handful of sizes `M` are extrapolated to the
//! infinite-size limit by ordinary least squares on either `a + b/M` or the
//! Stirling-motivated `a + b/M + c (1/M) ln(1/M)` form. Uncertainties on the
//! medians come from the percentile bootstrap.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gram::solve_spd;
use crate::rng::stream_rng;

/// Ensemble medians of one quantity across sizes, with confidence bounds.
#[derive(Debug, Clone, Serialize)]
pub struct SizeSeries {
    pub m_values: Vec<usize>,
    pub medians: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub quantity: String,
}

impl SizeSeries {
    pub fn new(
        m_values: Vec<usize>,
        medians: Vec<f64>,
        ci_lo: Vec<f64>,
        ci_hi: Vec<f64>,
        quantity: impl Into<String>,
    ) -> Result<Self> {
        if m_values.len() != medians.len()
            || medians.len() != ci_lo.len()
            || ci_lo.len() != ci_hi.len()
        {
            return Err(Error::Input("size series field lengths differ".into()));
        }
        if !m_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Input("size series M values must increase".into()));
        }
        for i in 0..medians.len() {
            if !(ci_lo[i] <= medians[i] && medians[i] <= ci_hi[i]) {
                return Err(Error::Input(format!(
                    "confidence interval does not bracket the median at M={}",
                    m_values[i]
                )));
            }
        }
        Ok(SizeSeries { m_values, medians, ci_lo, ci_hi, quantity: quantity.into() })
    }
}

/// Regression model for the extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitForm {
    /// `y = a + b x` on raw coordinates.
    Straight,
    /// `y = a + b / M`.
    LinearInvM,
    /// `y = a + b / M + c (1/M) ln(1/M)`.
    Stirling,
}

/// Ordinary least squares result; `params[0]` is the `M -> infinity` value.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub form: FitForm,
    pub params: Vec<f64>,
    pub stderr: Vec<f64>,
    pub rss: f64,
    pub dof: usize,
}

impl FitResult {
    pub fn intercept(&self) -> f64 {
        self.params[0]
    }
}

fn design_row(form: FitForm, x: f64) -> Vec<f64> {
    match form {
        FitForm::Straight => vec![1.0, x],
        FitForm::LinearInvM => vec![1.0, 1.0 / x],
        FitForm::Stirling => vec![1.0, 1.0 / x, (1.0 / x) * (1.0 / x).ln()],
    }
}

/// OLS fit of `ys` on the design generated from `xs` by `form`.
pub fn fit_linear(xs: &[f64], ys: &[f64], form: FitForm) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return Err(Error::Input("x and y lengths differ".into()));
    }
    let p = match form {
        FitForm::Straight | FitForm::LinearInvM => 2,
        FitForm::Stirling => 3,
    };
    let min_points = match form {
        FitForm::Straight => 2,
        FitForm::LinearInvM => 3,
        FitForm::Stirling => 4,
    };
    if xs.len() < min_points {
        return Err(Error::Fit(format!(
            "{form:?} fit needs at least {min_points} points, got {}",
            xs.len()
        )));
    }
    let n = xs.len();
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| design_row(form, x)).collect();
    let mut xtx = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    for (row, &y) in rows.iter().zip(ys) {
        for i in 0..p {
            xty[i] += row[i] * y;
            for j in 0..p {
                xtx[i * p + j] += row[i] * row[j];
            }
        }
    }
    let params =
        solve_spd(&xtx, &xty, p).map_err(|_| Error::Fit("rank-deficient design".into()))?;
    let mut rss = 0.0;
    for (row, &y) in rows.iter().zip(ys) {
        let fitted: f64 = row.iter().zip(&params).map(|(a, b)| a * b).sum();
        rss += (y - fitted) * (y - fitted);
    }
    let dof = n.saturating_sub(p);
    let sigma2 = if dof > 0 { rss / dof as f64 } else { 0.0 };
    // diagonal of sigma2 (X^T X)^{-1} via p solves
    let mut stderr = vec![0.0; p];
    for i in 0..p {
        let mut e = vec![0.0; p];
        e[i] = 1.0;
        let col = solve_spd(&xtx, &e, p).map_err(|_| Error::Fit("rank-deficient design".into()))?;
        stderr[i] = (sigma2 * col[i]).max(0.0).sqrt();
    }
    Ok(FitResult { form, params, stderr, rss, dof })
}

/// Least-squares extrapolation of a size series to `M -> infinity`.
pub fn extrapolate(series: &SizeSeries, form: FitForm) -> Result<FitResult> {
    if form == FitForm::Straight {
        return Err(Error::Parameter(
            "extrapolation expects linear_inv_m or stirling".into(),
        ));
    }
    let xs: Vec<f64> = series.m_values.iter().map(|&m| m as f64).collect();
    fit_linear(&xs, &series.medians, form)
}

/// Median of a sample (average of the middle two for even sizes).
pub fn median(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in samples"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Percentile bootstrap interval for the median. Deterministic in `seed`.
pub fn bootstrap_median_ci(
    samples: &[f64],
    b: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Input("bootstrap on an empty sample".into()));
    }
    if b < 200 {
        return Err(Error::Parameter(format!("bootstrap needs B >= 200, got {b}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Parameter(format!("confidence level {level} outside (0, 1)")));
    }
    let mut rng = stream_rng(seed, 0);
    let n = samples.len();
    let mut medians = Vec::with_capacity(b);
    let mut resample = vec![0.0; n];
    for _ in 0..b {
        for slot in resample.iter_mut() {
            *slot = samples[rng.random_range(0..n)];
        }
        medians.push(median(&resample));
    }
    medians.sort_by(|a, b| a.partial_cmp(b).expect("NaN in bootstrap medians"));
    let quantile = |q: f64| {
        let idx = ((b as f64 - 1.0) * q).round() as usize;
        medians[idx.min(b - 1)]
    };
    let half_tail = 0.5 * (1.0 - level);
    Ok((median(samples), quantile(half_tail), quantile(1.0 - half_tail)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series_from(ms: &[usize], f: impl Fn(f64) -> f64) -> SizeSeries {
        let med: Vec<f64> = ms.iter().map(|&m| f(m as f64)).collect();
        SizeSeries::new(ms.to_vec(), med.clone(), med.clone(), med, "q").unwrap()
    }

    #[test]
    fn recovers_exact_linear_inv_m() {
        let s = series_from(&[10, 20, 40, 80], |m| 3.25 - 1.5 / m);
        let fit = extrapolate(&s, FitForm::LinearInvM).unwrap();
        assert_abs_diff_eq!(fit.intercept(), 3.25, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.params[1], -1.5, epsilon = 1e-10);
    }

    #[test]
    fn recovers_exact_stirling() {
        let s = series_from(&[10, 20, 40, 80, 160], |m| {
            0.7 + 2.0 / m - 0.4 * (1.0 / m) * (1.0 / m).ln()
        });
        let fit = extrapolate(&s, FitForm::Stirling).unwrap();
        assert_abs_diff_eq!(fit.params[0], 0.7, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.params[1], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.params[2], -0.4, epsilon = 1e-8);
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let ms = [30usize, 35, 40, 45, 50];
        let med: Vec<f64> = ms
            .iter()
            .map(|&m| 0.3 + 1.0 / m as f64 + 0.01 * (m as f64).sin())
            .collect();
        let s = SizeSeries::new(ms.to_vec(), med.clone(), med.clone(), med, "q").unwrap();
        let fit = extrapolate(&s, FitForm::LinearInvM).unwrap();
        let mut dot0 = 0.0;
        let mut dot1 = 0.0;
        for (i, &m) in ms.iter().enumerate() {
            let fitted = fit.params[0] + fit.params[1] / m as f64;
            let res = s.medians[i] - fitted;
            dot0 += res;
            dot1 += res / m as f64;
        }
        assert!(dot0.abs() < 1e-10 && dot1.abs() < 1e-10);
    }

    #[test]
    fn too_few_points_is_a_fit_error() {
        let s = series_from(&[10, 20], |m| 1.0 / m);
        assert!(matches!(extrapolate(&s, FitForm::LinearInvM), Err(Error::Fit(_))));
        let s = series_from(&[10, 20, 40], |m| 1.0 / m);
        assert!(matches!(extrapolate(&s, FitForm::Stirling), Err(Error::Fit(_))));
    }

    #[test]
    fn bootstrap_degenerate_and_containment() {
        let (med, lo, hi) = bootstrap_median_ci(&[4.2; 50], 500, 0.95, 1).unwrap();
        assert_eq!((med, lo, hi), (4.2, 4.2, 4.2));

        let samples: Vec<f64> = (1..=101).map(|i| i as f64).collect();
        let (med, lo, hi) = bootstrap_median_ci(&samples, 1000, 0.95, 1).unwrap();
        assert_eq!(med, 51.0);
        assert!(lo <= 51.0 && 51.0 <= hi);
        assert!(matches!(bootstrap_median_ci(&[], 500, 0.95, 1), Err(Error::Input(_))));
    }

    #[test]
    fn bootstrap_width_matches_median_asymptotics() {
        // for N(0,1), sd of the sample median is ~ 1.2533/sqrt(n); the 95%
        // percentile interval should be ~ 2 * 1.96 * that, within 25%
        use rand_distr::StandardNormal;
        let mut rng = stream_rng(11, 3);
        let n = 1000;
        let samples: Vec<f64> =
            (0..n).map(|_| rand::Rng::sample::<f64, _>(&mut rng, StandardNormal)).collect();
        let (_, lo, hi) = bootstrap_median_ci(&samples, 4000, 0.95, 5).unwrap();
        let width = hi - lo;
        let expect = 2.0 * 1.959964 * 1.2533 / (n as f64).sqrt();
        assert!(
            (width - expect).abs() < 0.25 * expect,
            "width {width} vs expected {expect}"
        );
    }

    #[test]
    fn bootstrap_width_shrinks_like_sqrt_n() {
        use rand_distr::StandardNormal;
        let mut widths = Vec::new();
        for (i, &n) in [100usize, 1000, 10000].iter().enumerate() {
            let mut rng = stream_rng(21 + i as u64, 0);
            let samples: Vec<f64> =
                (0..n).map(|_| rand::Rng::sample::<f64, _>(&mut rng, StandardNormal)).collect();
            let (_, lo, hi) = bootstrap_median_ci(&samples, 2000, 0.95, 7).unwrap();
            widths.push(hi - lo);
        }
        for w in widths.windows(2) {
            let ratio = w[0] / w[1];
            let target = 10f64.sqrt();
            assert!(
                (ratio - target).abs() < 0.3 * target,
                "shrink ratio {ratio} vs {target}"
            );
        }
    }
}
