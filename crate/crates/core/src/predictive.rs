//! Closed-form EP predictive probabilities.
//!
//! For a Gaussian approximation `q(β) = N(ξ, Ω)` the predictive probability is
//! `E_q[Φ(xᵀβ)] = Φ(xᵀξ / sqrt(1 + u))` with `u = xᵀΩx`. When the covariance is
//! kept in factored form `Ω = ν²I - ν²VKX`, the quadratic form is
//! `u = ν²[xᵀx - (Vᵀx)ᵀK(Xx)]` and costs `O(pn)` instead of `O(p²)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{column, dot};
use crate::special::cdf_unchecked;

/// Batches whose `ñ × n` intermediates exceed this many entries are evaluated
/// row by row.
pub const BATCH_MEMORY_BUDGET: usize = 100_000_000;

/// Relative tolerance for a numerically negative quadratic form, in units of
/// `ν²‖x‖²`.
pub const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// Explicit `p × p` covariance `Q⁻¹`.
    Dense(DMatrix<f64>),
    /// `Q⁻¹ = ν²I - ν² V diag(k) X`, with `v` holding `v_j = Q⁻¹x_j` as columns
    /// and `xt` holding `x_j` as columns (both `p × n`).
    Factored {
        v: DMatrix<f64>,
        k: DVector<f64>,
        xt: DMatrix<f64>,
    },
}

/// Final Gaussian approximation `q(β) = N(ξ_EP, Ω_EP)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub xi: DVector<f64>,
    pub prior_variance: f64,
    pub covariance: Covariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveResult {
    pub probability: f64,
    /// `x_newᵀ Ω_EP x_new`.
    pub u: f64,
    /// `x_newᵀ ξ_EP`.
    pub linear: f64,
}

impl PredictiveResult {
    fn new(linear: f64, u: f64) -> Self {
        Self {
            probability: cdf_unchecked(linear / (1.0 + u).sqrt()),
            u,
            linear,
        }
    }
}

impl GaussianPosterior {
    pub fn p(&self) -> usize {
        self.xi.len()
    }

    pub fn is_factored(&self) -> bool {
        matches!(self.covariance, Covariance::Factored { .. })
    }

    /// Posterior with no active sites: `N(0, ν²I)`.
    pub fn prior(p: usize, prior_variance: f64) -> Self {
        Self {
            xi: DVector::zeros(p),
            prior_variance,
            covariance: Covariance::Dense(DMatrix::identity(p, p) * prior_variance),
        }
    }

    /// Explicit `p × p` covariance. For the factored form this evaluates
    /// `ν²I - ν²VKX` without symmetrizing.
    pub fn assemble_covariance(&self) -> DMatrix<f64> {
        match &self.covariance {
            Covariance::Dense(sigma) => sigma.clone(),
            Covariance::Factored { v, k, xt } => {
                let nu2 = self.prior_variance;
                let mut vk = v.clone();
                for (j, mut col) in vk.column_iter_mut().enumerate() {
                    col *= k[j];
                }
                let mut out = DMatrix::identity(self.p(), self.p()) * nu2;
                out.gemm(-nu2, &vk, &xt.transpose(), 1.0);
                out
            }
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: len,
            });
        }
        Ok(())
    }

    fn clamp_quadratic_form(&self, u: f64, norm2: f64) -> Result<f64> {
        let tolerance = PSD_TOLERANCE * self.prior_variance * norm2;
        if u >= 0.0 {
            Ok(u)
        } else if u > -tolerance {
            Ok(0.0)
        } else {
            Err(Error::NumericalBreakdown { u, tolerance })
        }
    }

    /// Raw `xᵀΩx` for one covariate vector, before clamping.
    fn quadratic_form(&self, x: &[f64]) -> f64 {
        match &self.covariance {
            Covariance::Dense(sigma) => {
                let mut u = 0.0;
                for j in 0..x.len() {
                    u += x[j] * dot(column(sigma, j), x);
                }
                u
            }
            Covariance::Factored { v, k, xt } => {
                let mut s = 0.0;
                for j in 0..k.len() {
                    s += k[j] * dot(column(v, j), x) * dot(column(xt, j), x);
                }
                self.prior_variance * (dot(x, x) - s)
            }
        }
    }

    pub fn predict_one(&self, x_new: &[f64]) -> Result<PredictiveResult> {
        self.check_dim(x_new.len())?;
        let norm2 = dot(x_new, x_new);
        let u = self.clamp_quadratic_form(self.quadratic_form(x_new), norm2)?;
        Ok(PredictiveResult::new(dot(x_new, self.xi.as_slice()), u))
    }

    /// Predictive probabilities for every row of `x_new` (`ñ × p`).
    ///
    /// Bitwise identical to calling [`predict_one`](Self::predict_one) per row.
    pub fn predict_batch(&self, x_new: &DMatrix<f64>) -> Result<Vec<PredictiveResult>> {
        self.check_dim(x_new.ncols())?;
        let rows = x_new.transpose();
        let n_rows = x_new.nrows();
        match &self.covariance {
            Covariance::Factored { v, k, xt } if n_rows * k.len() <= BATCH_MEMORY_BUDGET => {
                // Walk each (v_j, x_j) pair once across all test rows.
                let n = k.len();
                let mut proj_v = vec![0.0; n * n_rows];
                let mut proj_x = vec![0.0; n * n_rows];
                for j in 0..n {
                    let (vj, xj) = (column(v, j), column(xt, j));
                    for r in 0..n_rows {
                        let x = column(&rows, r);
                        proj_v[r * n + j] = dot(vj, x);
                        proj_x[r * n + j] = dot(xj, x);
                    }
                }
                (0..n_rows)
                    .map(|r| {
                        let x = column(&rows, r);
                        let mut s = 0.0;
                        for j in 0..n {
                            s += k[j] * proj_v[r * n + j] * proj_x[r * n + j];
                        }
                        let norm2 = dot(x, x);
                        let u = self.clamp_quadratic_form(self.prior_variance * (norm2 - s), norm2)?;
                        Ok(PredictiveResult::new(dot(x, self.xi.as_slice()), u))
                    })
                    .collect()
            }
            _ => (0..n_rows)
                .map(|r| self.predict_one(column(&rows, r)))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn factored_fixture() -> GaussianPosterior {
        // Two sites in R^3 with hand-built v_j = Q⁻¹x_j.
        let nu2 = 2.0;
        let xt = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 2.0, -1.0]);
        let k = DVector::from_vec(vec![0.4, 0.7]);
        let mut q = DMatrix::identity(3, 3) / nu2;
        for j in 0..2 {
            let x = xt.column(j);
            q += k[j] * x * x.transpose();
        }
        let sigma = q.try_inverse().unwrap();
        let v = &sigma * &xt;
        GaussianPosterior {
            xi: DVector::from_vec(vec![0.3, -0.2, 0.5]),
            prior_variance: nu2,
            covariance: Covariance::Factored { v, k, xt },
        }
    }

    fn dense_mirror(post: &GaussianPosterior) -> GaussianPosterior {
        GaussianPosterior {
            covariance: Covariance::Dense(post.assemble_covariance()),
            ..post.clone()
        }
    }

    #[test]
    fn zero_mean_gives_one_half() {
        let post = GaussianPosterior::prior(3, 25.0);
        let res = post.predict_one(&[0.6, 0.8, 0.0]).unwrap();
        assert_eq!(res.probability, 0.5);
        assert!((res.u - 25.0).abs() < 1e-12);
    }

    #[test]
    fn dense_and_factored_paths_agree() {
        let post = factored_fixture();
        let dense = dense_mirror(&post);
        for x in [[1.0, 2.0, 3.0], [-0.5, 0.1, 0.0], [0.0, 0.0, 1.0]] {
            let a = post.predict_one(&x).unwrap();
            let b = dense.predict_one(&x).unwrap();
            assert!(((a.u - b.u) / b.u).abs() < 1e-12);
            assert!((a.probability - b.probability).abs() < 1e-14);
        }
    }

    #[test]
    fn batch_is_bitwise_equal_to_single() {
        let post = factored_fixture();
        let rows = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, -0.5, 0.1, 0.0, 1.0, 2.0, 3.0]);
        for post in [post.clone(), dense_mirror(&post)] {
            let batch = post.predict_batch(&rows).unwrap();
            for (r, res) in batch.iter().enumerate() {
                let row: Vec<f64> = rows.row(r).iter().copied().collect();
                assert_eq!(*res, post.predict_one(&row).unwrap());
            }
            assert_eq!(batch[0], batch[2]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let post = factored_fixture();
        assert!(matches!(
            post.predict_one(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        ));
        assert!(post.predict_batch(&DMatrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn negative_quadratic_form_is_clamped_or_rejected() {
        let mut post = GaussianPosterior::prior(2, 1.0);
        post.covariance = Covariance::Dense(DMatrix::from_diagonal_element(2, 2, -1e-12));
        assert_eq!(post.predict_one(&[1.0, 0.0]).unwrap().u, 0.0);
        post.covariance = Covariance::Dense(DMatrix::from_diagonal_element(2, 2, -1e-3));
        assert!(matches!(
            post.predict_one(&[1.0, 0.0]),
            Err(Error::NumericalBreakdown { .. })
        ));
    }

    #[test]
    fn probability_is_monotone_and_shrinks_with_u() {
        let mut last = 0.0;
        for i in -50..=50 {
            let p = PredictiveResult::new(i as f64 * 0.1, 2.0).probability;
            assert!(p > last || i == -50);
            last = p;
        }
        for linear in [-2.0, -0.3, 0.3, 2.0] {
            let mut gap = f64::INFINITY;
            for u in [0.0, 0.5, 1.0, 4.0, 16.0, 100.0] {
                let g = (PredictiveResult::new(linear, u).probability - 0.5).abs();
                assert!(g < gap);
                gap = g;
            }
        }
    }

    proptest! {
        #[test]
        fn complement_symmetry(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
            let post = factored_fixture();
            let p = post.predict_one(&[a, b, c]).unwrap().probability;
            let q = post.predict_one(&[-a, -b, -c]).unwrap().probability;
            prop_assert!((p + q - 1.0).abs() <= 1e-12);
        }
    }
}
