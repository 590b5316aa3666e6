//! Data-augmentation Gibbs sampler for the probit posterior.
//!
//! Alternates `z_i | β, y_i ~ N(x_iᵀβ, 1)` truncated to the side of zero given
//! by `y_i`, and `β | z ~ N(A Xᵀz, A)` with `A = (ν⁻²I + XᵀX)⁻¹`. The Gaussian
//! step uses a Cholesky factor of `A⁻¹` when `p <= n`; otherwise it uses the
//! exact `O(n²p)` sampler that only factorizes the `n × n` matrix
//! `ν²XXᵀ + I` (Bhattacharya, Chakraborty and Mallick, 2016).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{column, dot};
use crate::special::cdf_unchecked;

use super::truncnorm::{truncated_normal_draw, Side};

/// Number of batches used for batch-means standard errors.
pub const BATCHES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GibbsSpec {
    pub burn_in: usize,
    pub draws: usize,
    pub seed: u64,
}

impl Default for GibbsSpec {
    fn default() -> Self {
        Self {
            burn_in: 2_000,
            draws: 10_000,
            seed: 0,
        }
    }
}

impl GibbsSpec {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::Config("Gibbs draws must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsPredictive {
    pub probs: Vec<f64>,
    /// Batch-means standard errors; NaN when fewer than two batches exist.
    pub standard_errors: Vec<f64>,
}

/// Running average of `Φ(x_rᵀβ)` over draws, with batch-means bookkeeping.
#[derive(Debug, Clone)]
pub struct PredictiveAverager {
    rows: DMatrix<f64>,
    batch_len: usize,
    n_batches: usize,
    seen: usize,
    totals: Vec<f64>,
    current: Vec<f64>,
    batch_means: Vec<Vec<f64>>,
}

impl PredictiveAverager {
    /// `x_new` is `ñ × p`; `draws` is the number of draws that will be pushed.
    pub fn new(x_new: &DMatrix<f64>, draws: usize) -> Self {
        let n_batches = BATCHES.min(draws).max(1);
        let n_new = x_new.nrows();
        Self {
            rows: x_new.transpose(),
            batch_len: draws / n_batches,
            n_batches,
            seen: 0,
            totals: vec![0.0; n_new],
            current: vec![0.0; n_new],
            batch_means: vec![Vec::with_capacity(n_batches); n_new],
        }
    }

    /// Adds one draw of `β`, contributing `Φ(x_rᵀβ)` for every row.
    pub fn push(&mut self, beta: &[f64]) {
        let probs: Vec<f64> = (0..self.totals.len())
            .map(|r| cdf_unchecked(dot(column(&self.rows, r), beta)))
            .collect();
        self.push_probs(&probs);
    }

    /// Adds one draw of per-row probabilities directly.
    pub fn push_probs(&mut self, probs: &[f64]) {
        debug_assert_eq!(probs.len(), self.totals.len());
        for (r, &prob) in probs.iter().enumerate() {
            self.totals[r] += prob;
            self.current[r] += prob;
        }
        self.seen += 1;
        if self.seen.is_multiple_of(self.batch_len) && self.seen / self.batch_len <= self.n_batches {
            for (cur, means) in self.current.iter_mut().zip(&mut self.batch_means) {
                means.push(*cur / self.batch_len as f64);
                *cur = 0.0;
            }
        }
    }

    pub fn finish(self) -> GibbsPredictive {
        let draws = self.seen.max(1) as f64;
        let probs = self.totals.iter().map(|t| t / draws).collect();
        let standard_errors = self
            .batch_means
            .iter()
            .map(|means| {
                let b = means.len();
                if b < 2 {
                    return f64::NAN;
                }
                let mean = means.iter().sum::<f64>() / b as f64;
                let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
                (var / b as f64).sqrt()
            })
            .collect();
        GibbsPredictive {
            probs,
            standard_errors,
        }
    }
}

enum CoefficientStep {
    /// Cholesky factor of `ν⁻²I + XᵀX`.
    Precision(Cholesky<f64, Dyn>),
    /// Cholesky factor of `ν²XXᵀ + I_n`.
    Dual(Cholesky<f64, Dyn>),
}

impl CoefficientStep {
    fn for_data(data: &Dataset) -> Result<Self> {
        let (n, p) = (data.n(), data.p());
        let x = data.design();
        let nu2 = data.prior_variance();
        if p <= n {
            let mut prec = x.tr_mul(x);
            for j in 0..p {
                prec[(j, j)] += 1.0 / nu2;
            }
            let chol = prec
                .cholesky()
                .ok_or_else(|| Error::Factorization("Gibbs precision matrix".into()))?;
            Ok(CoefficientStep::Precision(chol))
        } else {
            let mut gram = x * x.transpose() * nu2;
            for i in 0..n {
                gram[(i, i)] += 1.0;
            }
            let chol = gram
                .cholesky()
                .ok_or_else(|| Error::Factorization("Gibbs dual Gram matrix".into()))?;
            Ok(CoefficientStep::Dual(chol))
        }
    }

    fn conditional_predictive(&self, data: &Dataset, x_new: &DMatrix<f64>) -> ConditionalPredictive {
        let x = data.design();
        let nu2 = data.prior_variance();
        let xt_new = x_new.transpose();
        // Columns of `a_xt_new` are A x_r.
        let a_xt_new = match self {
            CoefficientStep::Precision(chol) => chol.solve(&xt_new),
            CoefficientStep::Dual(chol) => {
                // A = ν²I − ν⁴Xᵀ(ν²XXᵀ + I)⁻¹X.
                let proj = chol.solve(&(x * &xt_new));
                (&xt_new - x.tr_mul(&proj) * nu2) * nu2
            }
        };
        let mean_map = (x * &a_xt_new).transpose();
        let scale = (0..x_new.nrows())
            .map(|r| {
                let u = dot(column(&xt_new, r), column(&a_xt_new, r)).max(0.0);
                1.0 / (1.0 + u).sqrt()
            })
            .collect();
        ConditionalPredictive { mean_map, scale }
    }
}

/// The closed-form map from latent utilities to `Pr[y_new = 1 | z, y]` for
/// every row of `x_new`.
pub fn conditional_predictive_map(data: &Dataset, x_new: &DMatrix<f64>) -> Result<ConditionalPredictive> {
    if x_new.ncols() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            found: x_new.ncols(),
        });
    }
    Ok(CoefficientStep::for_data(data)?.conditional_predictive(data, x_new))
}

/// Seeded Albert–Chib sampler over one dataset.
pub struct ProbitGibbs<'a> {
    data: &'a Dataset,
    step: CoefficientStep,
    rng: ChaCha8Rng,
    beta: DVector<f64>,
    z: DVector<f64>,
    iteration: usize,
}

impl<'a> ProbitGibbs<'a> {
    pub fn new(data: &'a Dataset, seed: u64) -> Result<Self> {
        let (n, p) = (data.n(), data.p());
        let step = CoefficientStep::for_data(data)?;
        Ok(Self {
            data,
            step,
            rng: ChaCha8Rng::seed_from_u64(seed),
            beta: DVector::zeros(p),
            z: DVector::zeros(n),
            iteration: 0,
        })
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    /// Latent utilities from the most recent scan.
    pub fn latent(&self) -> &DVector<f64> {
        &self.z
    }

    /// `Pr[y_new = 1 | z, y]` for every row of `x_new`, which is available in
    /// closed form because `β | z` is Gaussian.
    pub fn conditional_predictive(&self, x_new: &DMatrix<f64>) -> ConditionalPredictive {
        self.step.conditional_predictive(self.data, x_new)
    }

    fn normals(&mut self, len: usize) -> DVector<f64> {
        DVector::from_fn(len, |_, _| StandardNormal.sample(&mut self.rng))
    }

    /// `β ~ N(A Xᵀz, A)` for fixed latent utilities `z`.
    pub fn draw_coefficients(&mut self, z: &DVector<f64>) -> DVector<f64> {
        let data = self.data;
        let x = data.design();
        let eps = self.normals(data.p());
        let dual = matches!(self.step, CoefficientStep::Dual(_));
        let delta = if dual { self.normals(data.n()) } else { DVector::zeros(0) };
        match &self.step {
            CoefficientStep::Precision(chol) => {
                // β = L⁻ᵀ(L⁻¹Xᵀz + ε) has mean (LLᵀ)⁻¹Xᵀz and covariance (LLᵀ)⁻¹.
                let l = chol.l_dirty();
                let mut rhs = x.tr_mul(z);
                l.solve_lower_triangular_mut(&mut rhs);
                rhs += eps;
                l.tr_solve_lower_triangular_mut(&mut rhs);
                rhs
            }
            CoefficientStep::Dual(chol) => {
                let nu2 = data.prior_variance();
                let u = eps * nu2.sqrt();
                let v = x * &u + delta;
                let w = chol.solve(&(z - v));
                u + x.tr_mul(&w) * nu2
            }
        }
    }

    /// One full scan: latent utilities, then coefficients.
    pub fn step(&mut self) -> Result<&DVector<f64>> {
        let data = self.data;
        let x = data.design();
        let eta = x * &self.beta;
        let z = DVector::from_fn(data.n(), |i, _| {
            truncated_normal_draw(eta[i], Side::from_label(data.labels()[i]), &mut self.rng)
        });
        let beta = self.draw_coefficients(&z);
        self.iteration += 1;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::SamplerFault {
                iteration: self.iteration,
            });
        }
        self.beta = beta;
        self.z = z;
        Ok(&self.beta)
    }
}

/// Maps latent utilities to `Φ(x_rᵀA Xᵀz / sqrt(1 + x_rᵀA x_r))` for each
/// test row `r`, with `A = (ν⁻²I + XᵀX)⁻¹`.
#[derive(Debug, Clone)]
pub struct ConditionalPredictive {
    /// `X_new A Xᵀ`, `ñ × n`.
    mean_map: DMatrix<f64>,
    scale: Vec<f64>,
}

impl ConditionalPredictive {
    pub fn probs(&self, z: &DVector<f64>) -> Vec<f64> {
        let means = &self.mean_map * z;
        means
            .iter()
            .zip(&self.scale)
            .map(|(m, s)| cdf_unchecked(m * s))
            .collect()
    }
}

/// Posterior predictive probabilities for every row of `x_new`. Each retained
/// scan contributes `Pr[y_new = 1 | z, y]` rather than `Φ(x_newᵀβ)`, which
/// has the same expectation and smaller variance.
pub fn gibbs_predictive(
    data: &Dataset,
    x_new: &DMatrix<f64>,
    spec: &GibbsSpec,
) -> Result<GibbsPredictive> {
    spec.validate()?;
    if x_new.ncols() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            found: x_new.ncols(),
        });
    }
    let mut sampler = ProbitGibbs::new(data, spec.seed)?;
    for _ in 0..spec.burn_in {
        sampler.step()?;
    }
    let conditional = sampler.conditional_predictive(x_new);
    let mut avg = PredictiveAverager::new(x_new, spec.draws);
    for _ in 0..spec.draws {
        sampler.step()?;
        avg.push_probs(&conditional.probs(sampler.latent()));
    }
    Ok(avg.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_zero_draws_average_to_one_half() {
        let x_new = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 1.0]);
        let mut avg = PredictiveAverager::new(&x_new, 200);
        for _ in 0..200 {
            avg.push(&[0.0, 0.0, 0.0]);
        }
        let out = avg.finish();
        assert_eq!(out.probs, vec![0.5, 0.5]);
        assert_eq!(out.standard_errors, vec![0.0, 0.0]);
    }

    #[test]
    fn batch_means_of_alternating_draws() {
        // Draws alternate between β giving Φ = Φ(1) and Φ(-1); batches of 4
        // average to exactly 1/2, so the batch-means error is zero.
        let x_new = DMatrix::from_row_slice(1, 1, &[1.0]);
        let mut avg = PredictiveAverager::new(&x_new, 200);
        for t in 0..200 {
            avg.push(&[if t % 2 == 0 { 1.0 } else { -1.0 }]);
        }
        let out = avg.finish();
        assert!((out.probs[0] - 0.5).abs() < 1e-15);
        assert!(out.standard_errors[0] < 1e-15);
    }

    #[test]
    fn too_few_draws_have_no_standard_error() {
        let x_new = DMatrix::from_row_slice(1, 1, &[1.0]);
        let mut avg = PredictiveAverager::new(&x_new, 1);
        avg.push(&[0.3]);
        assert!(avg.finish().standard_errors[0].is_nan());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.2, -0.4, 1.0, 0.3, -0.7, 2.0, 0.1]);
        let data = Dataset::new(x, vec![1, 0, 1, 1], 4.0).unwrap();
        let x_new = DMatrix::from_row_slice(1, 2, &[0.5, 0.5]);
        let spec = GibbsSpec { burn_in: 10, draws: 500, seed: 9 };
        let a = gibbs_predictive(&data, &x_new, &spec).unwrap();
        let b = gibbs_predictive(&data, &x_new, &spec).unwrap();
        assert_eq!(a, b);
        let c = gibbs_predictive(&data, &x_new, &GibbsSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn both_coefficient_steps_target_the_same_gaussian() {
        // With z held fixed the β-step is N(A Xᵀz, A); compare sample moments
        // of the two samplers on a p = 3, n = 3 problem forced down each path.
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, -0.2, 0.3, -1.0, 0.8, 0.0, 0.4, 1.5]);
        let data = Dataset::new(x.clone(), vec![1, 0, 1], 2.0).unwrap();
        let z = DVector::from_vec(vec![0.7, -0.4, 1.1]);
        let mut a_inv = x.tr_mul(&x);
        for j in 0..3 {
            a_inv[(j, j)] += 0.5;
        }
        let a = a_inv.try_inverse().unwrap();
        let mean = &a * x.tr_mul(&z);

        let mut prec = ProbitGibbs::new(&data, 1).unwrap();
        let mut dual = ProbitGibbs::new(&data, 2).unwrap();
        let mut gram = &x * x.transpose() * 2.0;
        for i in 0..3 {
            gram[(i, i)] += 1.0;
        }
        dual.step = CoefficientStep::Dual(gram.cholesky().unwrap());
        let draws = 200_000;
        for sampler in [&mut prec, &mut dual] {
            let mut sum = DVector::zeros(3);
            let mut sq = DMatrix::zeros(3, 3);
            for _ in 0..draws {
                let beta = sampler.draw_coefficients(&z);
                sum += &beta;
                sq += &beta * beta.transpose();
            }
            let m = sum / draws as f64;
            let cov = sq / draws as f64 - &m * m.transpose();
            for j in 0..3 {
                let se = (a[(j, j)] / draws as f64).sqrt();
                assert!((m[j] - mean[j]).abs() < 4.0 * se);
                for k in 0..3 {
                    assert!((cov[(j, k)] - a[(j, k)]).abs() < 0.02);
                }
            }
        }
    }

    #[test]
    fn conditional_predictive_matches_coefficient_average() {
        // For fixed z, averaging Φ(x_newᵀβ) over β-step draws recovers the
        // closed-form conditional probability on both coefficient paths.
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.3, -1.0, -0.6, 0.4]);
        let x_new = DMatrix::from_row_slice(2, 2, &[0.8, -0.3, -1.2, 2.0]);
        let data = Dataset::new(x.clone(), vec![1, 0, 1], 3.0).unwrap();
        let z = DVector::from_vec(vec![0.9, -0.2, 0.5]);
        let mut prec = ProbitGibbs::new(&data, 4).unwrap();
        let mut dual = ProbitGibbs::new(&data, 5).unwrap();
        let mut gram = &x * x.transpose() * 3.0;
        for i in 0..3 {
            gram[(i, i)] += 1.0;
        }
        dual.step = CoefficientStep::Dual(gram.cholesky().unwrap());
        let exact_prec = prec.conditional_predictive(&x_new).probs(&z);
        let exact_dual = dual.conditional_predictive(&x_new).probs(&z);
        for r in 0..2 {
            assert!((exact_prec[r] - exact_dual[r]).abs() < 1e-12);
        }
        let draws = 200_000;
        for sampler in [&mut prec, &mut dual] {
            let mut avg = PredictiveAverager::new(&x_new, draws);
            for _ in 0..draws {
                let beta = sampler.draw_coefficients(&z);
                avg.push(beta.as_slice());
            }
            let out = avg.finish();
            for r in 0..2 {
                assert!((out.probs[r] - exact_prec[r]).abs() < 4.0 * out.standard_errors[r].max(1e-4));
            }
        }
    }
}
