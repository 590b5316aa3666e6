use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::predictive::GaussianPosterior;
use crate::special::cdf_unchecked;

pub const MIN_SAMPLES: usize = 1_000;

const BLOCK: usize = 4_096;

/// Monte Carlo estimate of `E_q[Φ(x_newᵀβ)]` for `β ~ N(ξ, Ω)`, with its
/// standard error. Draws full coefficient vectors `β = ξ + Lε`.
pub fn mc_gaussian_expectation(
    post: &GaussianPosterior,
    x_new: &[f64],
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    mc_expectation_with(&post.xi, &post.assemble_covariance(), x_new, samples, seed)
}

/// Same as [`mc_gaussian_expectation`] for an explicit mean and covariance.
/// Positive semi-definite covariances, including the zero matrix, are allowed.
pub fn mc_expectation_with(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    x_new: &[f64],
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let p = mean.len();
    if samples < MIN_SAMPLES {
        return Err(Error::Config(format!(
            "at least {MIN_SAMPLES} Monte Carlo samples required, got {samples}"
        )));
    }
    if x_new.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: x_new.len(),
        });
    }
    let factor = psd_factor(cov)?;
    let x = DVector::from_column_slice(x_new);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut remaining = samples;
    while remaining > 0 {
        let block = remaining.min(BLOCK);
        let eps = DMatrix::from_fn(p, block, |_, _| StandardNormal.sample(&mut rng));
        let mut beta = &factor * eps;
        for mut col in beta.column_iter_mut() {
            col += mean;
        }
        let scores = beta.tr_mul(&x);
        for &s in scores.iter() {
            let v = cdf_unchecked(s);
            sum += v;
            sum_sq += v * v;
        }
        remaining -= block;
    }
    let n = samples as f64;
    let est = sum / n;
    let var = ((sum_sq - n * est * est) / (n - 1.0)).max(0.0);
    Ok((est, (var / n).sqrt()))
}

/// `L` with `LLᵀ = cov`, from a clipped eigendecomposition.
fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(cov.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let floor = -1e-10 * scale.max(f64::MIN_POSITIVE);
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l < floor) {
        return Err(Error::Factorization(format!(
            "covariance has negative eigenvalue {bad:e}"
        )));
    }
    let mut factor = eig.eigenvectors;
    for (j, mut col) in factor.column_iter_mut().enumerate() {
        col *= eig.eigenvalues[j].max(0.0).sqrt();
    }
    Ok(factor)
}
