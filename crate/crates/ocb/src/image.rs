//! Block image compression through the random-basis sparse approximation.
//!
//! The pipeline normalizes the image to zero mean and unit variance,
//! randomly permutes the pixels (so each 64-dimensional block looks like an
//! i.i.d. draw from the pixel histogram), compresses each block with a
//! shared random basis, then inverts every step and scores PSNR against the
//! original.

use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{ls_refit, rate_to_k, ProblemInstance, SupportMask};
use crate::replica::replica_lambda_for_rate;
use crate::rng::stream_rng;
use crate::solvers::{amp, omp};

/// Dimension of one pixel block.
pub const BLOCK_DIM: usize = 64;

/// Grayscale image with optional pipeline provenance.
#[derive(Debug, Clone)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    /// Row-major pixel values in [0, 255].
    pub pixels: Vec<f64>,
    /// Pixel permutation applied by the pipeline, if any.
    pub permutation: Option<Vec<u32>>,
    /// `(mean, std)` used for normalization, if any.
    pub norm_params: Option<(f64, f64)>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(ImageBuffer { width, height, pixels, permutation: None, norm_params: None })
    }
}

/// Which solver compresses the blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionMethod {
    /// Orthogonal matching pursuit at the requested rate.
    Omp,
    /// AMP at a replica-tuned lambda, followed by a least-squares refit.
    AmpLs,
}

/// Result of one compression run.
#[derive(Debug, Clone)]
pub struct CompressionOutcome {
    pub image: ImageBuffer,
    pub psnr: f64,
    pub elapsed: Duration,
    /// Lambda used by the AMP path (None for OMP).
    pub lambda: Option<f64>,
    pub block_epsilon_mean: f64,
    pub block_epsilon_median: f64,
    pub block_epsilon_max: f64,
}

/// Reads an 8-bit binary PGM (P5, maxval 255).
pub fn read_pgm(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path)?;
    parse_pgm(&bytes)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and # comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Input("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token(bytes)?;
    if magic != "P5" {
        return Err(Error::Input(format!(
            "unsupported image format {magic:?}; only 8-bit grayscale P5 is accepted"
        )));
    }
    let width: usize = token(bytes)?
        .parse()
        .map_err(|_| Error::Input("bad PGM width".into()))?;
    let height: usize = token(bytes)?
        .parse()
        .map_err(|_| Error::Input("bad PGM height".into()))?;
    let maxval: usize = token(bytes)?
        .parse()
        .map_err(|_| Error::Input("bad PGM maxval".into()))?;
    if maxval != 255 {
        return Err(Error::Input(format!("PGM maxval {maxval} != 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::Input("PGM raster truncated".into()));
    }
    let pixels = bytes[pos..pos + need].iter().map(|&b| b as f64).collect();
    ImageBuffer::new(width, height, pixels)
}

/// Writes an 8-bit binary PGM; pixels are clamped and rounded.
pub fn write_pgm(img: &ImageBuffer, path: &Path) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&p| p.round().clamp(0.0, 255.0) as u8));
    std::fs::write(path, out)?;
    Ok(())
}

/// Peak signal-to-noise ratio `10 log10(255^2 / MSE)` over all pixels.
/// Identical images give `f64::INFINITY`.
pub fn psnr(original: &ImageBuffer, reconstructed: &ImageBuffer) -> Result<f64> {
    if original.width != reconstructed.width || original.height != reconstructed.height {
        return Err(Error::Shape(format!(
            "PSNR of {}x{} against {}x{}",
            original.width, original.height, reconstructed.width, reconstructed.height
        )));
    }
    let n = original.pixels.len() as f64;
    let mse: f64 = original
        .pixels
        .iter()
        .zip(&reconstructed.pixels)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// Compresses the image block by block and reports the reconstruction, its
/// PSNR against the input, and the wall time spent.
pub fn compress_image(
    img: &ImageBuffer,
    method: CompressionMethod,
    r: f64,
    alpha: f64,
    seed: u64,
) -> Result<CompressionOutcome> {
    let start = Instant::now();
    let k = rate_to_k(r, BLOCK_DIM)?;
    if k == 0 || k > BLOCK_DIM {
        return Err(Error::Parameter(format!(
            "rate {r} gives {k} kept coefficients per {BLOCK_DIM}-dim block"
        )));
    }
    let n_cols_exact = BLOCK_DIM as f64 / alpha;
    let n_cols = n_cols_exact.round() as usize;
    if !(alpha > 0.0 && alpha <= 1.0) || (n_cols_exact - n_cols as f64).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "alpha={alpha} does not give an integral basis size for {BLOCK_DIM}-dim blocks"
        )));
    }

    // basis shared by all blocks, entries N(0, 1/BLOCK_DIM)
    let sigma = (1.0 / BLOCK_DIM as f64).sqrt();
    let mut rng_a = stream_rng(seed, 3);
    let mut basis = Array2::zeros((BLOCK_DIM, n_cols));
    for i in 0..BLOCK_DIM {
        for j in 0..n_cols {
            basis[(i, j)] = sigma * rng_a.sample::<f64, _>(StandardNormal);
        }
    }

    let lambda = match method {
        CompressionMethod::Omp => None,
        CompressionMethod::AmpLs => Some(replica_lambda_for_rate(alpha, r, 1.0)?),
    };
    let solver = move |inst: &ProblemInstance| -> Result<Array1<f64>> {
        match method {
            CompressionMethod::Omp => Ok(omp(inst, r)?.x),
            CompressionMethod::AmpLs => {
                Ok(amp_then_refit(inst, lambda.expect("lambda set for amp_ls")))
            }
        }
    };
    let (image, block_eps) = run_pipeline(img, &basis, alpha, seed, &solver)?;
    let out_psnr = psnr(img, &image)?;

    let mut sorted = block_eps.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN block distortion"));
    let mean = block_eps.iter().sum::<f64>() / block_eps.len() as f64;
    Ok(CompressionOutcome {
        image,
        psnr: out_psnr,
        elapsed: start.elapsed(),
        lambda,
        block_epsilon_mean: mean,
        block_epsilon_median: crate::stats::median(&block_eps),
        block_epsilon_max: *sorted.last().expect("at least one block"),
    })
}

/// AMP with a damping retry ladder; stalls fall back to refitting the best
/// support seen.
fn amp_then_refit(inst: &ProblemInstance, lambda: f64) -> Array1<f64> {
    for delta in [0.5, 0.25, 0.1] {
        match amp(inst, lambda, delta, 1e-10) {
            Ok((sol, _)) => return refit_support(inst, &sol.support),
            Err(Error::AmpStalled { solution, .. }) if delta <= 0.1 => {
                return refit_support(inst, &solution.support)
            }
            Err(_) => continue,
        }
    }
    refit_support(inst, &SupportMask::empty(inst.n()))
}

fn refit_support(inst: &ProblemInstance, support: &SupportMask) -> Array1<f64> {
    ls_refit(inst, support).map(|s| s.x).unwrap_or_else(|_| Array1::zeros(inst.n()))
}

/// The full normalize / permute / blockify / solve / invert pipeline with an
/// arbitrary basis and per-block solver. Returns the reconstruction and the
/// per-block distortions in normalized units.
pub(crate) fn run_pipeline(
    img: &ImageBuffer,
    basis: &Array2<f64>,
    alpha: f64,
    seed: u64,
    solver: &(dyn Fn(&ProblemInstance) -> Result<Array1<f64>> + Sync),
) -> Result<(ImageBuffer, Vec<f64>)> {
    let count = img.width * img.height;
    if count % BLOCK_DIM != 0 {
        return Err(Error::Shape(format!(
            "{}x{} has {count} pixels, not divisible into {BLOCK_DIM}-dim blocks",
            img.width, img.height
        )));
    }
    if basis.nrows() != BLOCK_DIM {
        return Err(Error::Shape(format!(
            "basis has {} rows, blocks have {BLOCK_DIM}",
            basis.nrows()
        )));
    }
    let mean = img.pixels.iter().sum::<f64>() / count as f64;
    let var = img
        .pixels
        .iter()
        .map(|&p| (p - mean) * (p - mean))
        .sum::<f64>()
        / count as f64;
    let std = var.sqrt().max(1e-12);

    // Fisher-Yates permutation from its own stream
    let mut perm: Vec<u32> = (0..count as u32).collect();
    let mut rng_p = stream_rng(seed, 2);
    for i in (1..count).rev() {
        let j = rng_p.random_range(0..=i);
        perm.swap(i, j);
    }

    let normalized: Vec<f64> = img.pixels.iter().map(|&p| (p - mean) / std).collect();
    let permuted: Vec<f64> = perm.iter().map(|&src| normalized[src as usize]).collect();

    let blocks = count / BLOCK_DIM;
    let results: Vec<Result<(Vec<f64>, f64)>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let y = Array1::from_iter(
                permuted[b * BLOCK_DIM..(b + 1) * BLOCK_DIM].iter().copied(),
            );
            let inst =
                ProblemInstance::from_parts(y, basis.clone(), 1.0, alpha, seed)?;
            let x = solver(&inst)?;
            let fitted = inst.basis().dot(&x);
            let residual = &inst.y() - &fitted;
            let eps = residual.dot(&residual) / (2.0 * BLOCK_DIM as f64);
            Ok((fitted.to_vec(), eps))
        })
        .collect();

    let mut reconstructed_permuted = Vec::with_capacity(count);
    let mut block_eps = Vec::with_capacity(blocks);
    for r in results {
        let (fitted, eps) = r?;
        reconstructed_permuted.extend(fitted);
        block_eps.push(eps);
    }

    let mut reconstructed = vec![0.0f64; count];
    for (i, &src) in perm.iter().enumerate() {
        reconstructed[src as usize] = reconstructed_permuted[i];
    }
    let pixels: Vec<f64> = reconstructed
        .iter()
        .map(|&z| (z * std + mean).clamp(0.0, 255.0).round())
        .collect();
    Ok((
        ImageBuffer {
            width: img.width,
            height: img.height,
            pixels,
            permutation: Some(perm),
            norm_params: Some((mean, std)),
        },
        block_eps,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Deterministic synthetic test image: smooth ramps, a disc and a few
    /// textured stripes.
    fn synthetic(width: usize, height: usize) -> ImageBuffer {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let fx = x as f64 / width as f64;
                let fy = y as f64 / height as f64;
                let mut v = 150.0 * fx + 60.0 * fy;
                let dx = fx - 0.6;
                let dy = fy - 0.35;
                if dx * dx + dy * dy < 0.04 {
                    v = 240.0;
                }
                if fy > 0.7 {
                    v += 35.0 * ((x / 3) % 2) as f64;
                }
                pixels.push(v.clamp(0.0, 255.0).round());
            }
        }
        ImageBuffer::new(width, height, pixels).unwrap()
    }

    #[test]
    fn psnr_hand_values() {
        let a = synthetic(32, 32);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);

        // every pixel off by exactly 255 -> 0 dB
        let all255 = ImageBuffer::new(32, 32, a.pixels.iter().map(|&p| {
            if p >= 128.0 { p - 255.0 } else { p + 255.0 }
        }).collect()).unwrap();
        assert!((psnr(&a, &all255).unwrap()).abs() < 1e-12);

        // MSE = 1 -> 48.13 dB; MSE = 100 -> 28.13 dB
        let plus1 = ImageBuffer::new(
            32,
            32,
            a.pixels.iter().map(|&p| if p < 255.0 { p + 1.0 } else { p - 1.0 }).collect(),
        )
        .unwrap();
        let got = psnr(&a, &plus1).unwrap();
        assert!((got - 10.0 * (255.0f64 * 255.0).log10()).abs() < 1e-12);
        assert!((got - 48.1308).abs() < 1e-3);
        let plus10 = ImageBuffer::new(
            32,
            32,
            a.pixels.iter().map(|&p| if p < 245.0 { p + 10.0 } else { p - 10.0 }).collect(),
        )
        .unwrap();
        let got = psnr(&a, &plus10).unwrap();
        assert!((got - 28.1308).abs() < 1e-3);

        let b = synthetic(16, 16);
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let img = synthetic(24, 16);
        let dir = std::env::temp_dir().join("ocb_pgm_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("img.pgm");
        write_pgm(&img, &path).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.width, 24);
        assert_eq!(back.height, 16);
        assert_eq!(back.pixels, img.pixels);
        // comments in the header are skipped
        let with_comment = b"P5\n# a comment\n2 2\n255\n\x01\x02\x03\x04".to_vec();
        let parsed = parse_pgm(&with_comment).unwrap();
        assert_eq!(parsed.pixels, vec![1.0, 2.0, 3.0, 4.0]);
        // non-P5 rejected
        assert!(parse_pgm(b"P2\n2 2\n255\n0 0 0 0").is_err());
    }

    #[test]
    fn identity_solver_round_trips_bit_exactly() {
        let img = synthetic(32, 32);
        let basis = Array2::eye(BLOCK_DIM);
        let solver = |inst: &ProblemInstance| -> Result<Array1<f64>> {
            Ok(inst.y().to_owned())
        };
        let (out, eps) = run_pipeline(&img, &basis, 1.0, 5, &solver).unwrap();
        assert_eq!(out.pixels, img.pixels);
        assert!(eps.iter().all(|&e| e < 1e-28));
        // the stored permutation is a bijection
        let mut seen = vec![false; 32 * 32];
        for &p in out.permutation.as_ref().unwrap() {
            assert!(!seen[p as usize]);
            seen[p as usize] = true;
        }
    }

    #[test]
    fn indivisible_dimensions_are_rejected() {
        let img = synthetic(30, 3); // 90 pixels
        let basis = Array2::eye(BLOCK_DIM);
        let solver = |inst: &ProblemInstance| -> Result<Array1<f64>> {
            Ok(inst.y().to_owned())
        };
        assert!(matches!(
            run_pipeline(&img, &basis, 1.0, 5, &solver),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn permutation_seed_barely_moves_psnr() {
        let img = synthetic(128, 128);
        let a = compress_image(&img, CompressionMethod::Omp, 0.5, 0.5, 11).unwrap();
        let b = compress_image(&img, CompressionMethod::Omp, 0.5, 0.5, 12).unwrap();
        assert!(
            (a.psnr - b.psnr).abs() < 0.5,
            "psnr {} vs {}",
            a.psnr,
            b.psnr
        );
    }

    #[test]
    fn omp_psnr_monotone_in_rate() {
        let img = synthetic(128, 128);
        let mut last = f64::NEG_INFINITY;
        for r in [0.25, 0.5, 0.75] {
            let out = compress_image(&img, CompressionMethod::Omp, r, 0.5, 3).unwrap();
            assert!(
                out.psnr > last,
                "psnr {} not above {last} at r={r}",
                out.psnr
            );
            last = out.psnr;
        }
    }
}
