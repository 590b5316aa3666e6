//! Exact Hamiltonian Monte Carlo for the collapsed probit posterior.
//!
//! Integrating `β` out of the augmented model leaves the latent utilities
//! `z ~ N(0, I + ν²XXᵀ)` restricted to `(2y_i - 1) z_i > 0`. Writing
//! `z = Lw` with `LLᵀ = I + ν²XXᵀ`, the target is a standard normal on a
//! polyhedral cone, for which Hamiltonian trajectories are sinusoids and wall
//! hits are found in closed form (Pakman and Paninski, 2014). Predictive
//! probabilities are averaged through the closed-form `Pr[y_new = 1 | z, y]`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};

use super::gibbs::{conditional_predictive_map, GibbsPredictive, GibbsSpec, PredictiveAverager};

/// Bounces allowed in one trajectory before the sampler gives up.
const MAX_BOUNCES: usize = 100_000;

/// Seeded exact-HMC sampler of the latent utilities.
pub struct LatentHmc<'a> {
    data: &'a Dataset,
    /// `I + ν²XXᵀ`.
    cov: DMatrix<f64>,
    /// Lower Cholesky factor of `cov`.
    l: DMatrix<f64>,
    signs: Vec<f64>,
    w: DVector<f64>,
    z: DVector<f64>,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl<'a> LatentHmc<'a> {
    pub fn new(data: &'a Dataset, seed: u64) -> Result<Self> {
        let n = data.n();
        let x = data.design();
        let mut cov = x * x.transpose() * data.prior_variance();
        for i in 0..n {
            cov[(i, i)] += 1.0;
        }
        let l = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Factorization("latent covariance".into()))?
            .unpack();
        let signs: Vec<f64> = (0..n).map(|i| data.sign(i)).collect();
        // z = sign vector is strictly feasible.
        let z = DVector::from_column_slice(&signs);
        let w = l
            .solve_lower_triangular(&z)
            .ok_or_else(|| Error::Factorization("latent covariance".into()))?;
        Ok(Self {
            data,
            cov,
            l,
            signs,
            w,
            z,
            rng: ChaCha8Rng::seed_from_u64(seed),
            iteration: 0,
        })
    }

    pub fn latent(&self) -> &DVector<f64> {
        &self.z
    }

    /// Follows one trajectory of length `π/2` from a fresh velocity.
    ///
    /// Along `w(t) = a sin t + b cos t` every wall value `f_iᵀw(t)`, with
    /// `f_i = (2y_i - 1)L_i`, is a sinusoid in the two numbers `f_iᵀa` and
    /// `f_iᵀb`. Those are carried along in closed form, and a reflection off
    /// wall `j` shifts them by multiples of `f_iᵀf_j = s_i s_j cov_ij`, so a
    /// bounce costs `O(n)`.
    pub fn step(&mut self) -> Result<&DVector<f64>> {
        self.iteration += 1;
        let n = self.data.n();
        let mut a = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut self.rng));
        let mut b = self.w.clone();
        let la = &self.l * &a;
        let mut fa: Vec<f64> = (0..n).map(|i| self.signs[i] * la[i]).collect();
        let mut fb: Vec<f64> = (0..n).map(|i| self.signs[i] * self.z[i]).collect();
        let mut remaining = FRAC_PI_2;
        let mut last_wall = usize::MAX;
        for _ in 0..MAX_BOUNCES {
            // fa sin t + fb cos t = u cos(t - φ) with φ = atan2(fa, fb); from
            // fb >= 0 the next zero is at t = φ + π/2.
            let mut hit = (remaining, usize::MAX);
            for i in 0..n {
                let t = fa[i].atan2(fb[i]) + FRAC_PI_2;
                if i == last_wall && !(1e-10..=PI - 1e-10).contains(&t) {
                    continue;
                }
                if t > 0.0 && t < hit.0 {
                    hit = (t, i);
                }
            }
            let (t, wall) = hit;
            let (sin, cos) = t.sin_cos();
            rotate(a.as_mut_slice(), b.as_mut_slice(), sin, cos);
            rotate(&mut fa, &mut fb, sin, cos);
            if wall == usize::MAX {
                break;
            }
            let sj = self.signs[wall];
            let coef = 2.0 * fa[wall] / self.cov[(wall, wall)];
            // a -= coef f_j, with f_j = s_j L_jᵀ.
            for k in 0..=wall {
                a[k] -= coef * sj * self.l[(wall, k)];
            }
            for i in 0..n {
                fa[i] -= coef * self.signs[i] * sj * self.cov[(i, wall)];
            }
            remaining -= t;
            last_wall = wall;
        }
        let z = &self.l * &b;
        // Carried wall values drift by rounding; allow that much.
        let violated = (0..n).any(|i| !(z[i] * self.signs[i] >= -1e-9 * self.cov[(i, i)].sqrt()));
        if violated {
            return Err(Error::SamplerFault {
                iteration: self.iteration,
            });
        }
        self.w = b;
        self.z = z;
        Ok(&self.z)
    }
}

/// Advances `(velocity, position)` along `w(t) = a sin t + b cos t` to time
/// `t`, given `sin t` and `cos t`.
fn rotate(a: &mut [f64], b: &mut [f64], sin: f64, cos: f64) {
    for (ak, bk) in a.iter_mut().zip(b.iter_mut()) {
        let (x, y) = (*ak, *bk);
        *ak = x * cos - y * sin;
        *bk = x * sin + y * cos;
    }
}

/// Posterior predictive probabilities for every row of `x_new` from the exact
/// HMC chain on the latent utilities.
pub fn hmc_predictive(
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
    let conditional = conditional_predictive_map(data, x_new)?;
    let mut sampler = LatentHmc::new(data, spec.seed)?;
    for _ in 0..spec.burn_in {
        sampler.step()?;
    }
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
    use crate::oracles::{exact_predictive_many, QuadratureSpec};

    #[test]
    fn single_utility_is_half_normal() {
        // n = 1: z ~ N(0, 1 + ν²x²) truncated to z > 0.
        let data = Dataset::new(DMatrix::from_row_slice(1, 1, &[1.5]), vec![1], 2.0).unwrap();
        let mut hmc = LatentHmc::new(&data, 3).unwrap();
        let draws = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let z = hmc.step().unwrap()[0];
            assert!(z >= 0.0);
            s += z;
            s2 += z * z;
        }
        let sd = (1.0f64 + 2.0 * 2.25).sqrt();
        let mean = s / draws as f64;
        let expected = sd * (2.0 / PI).sqrt();
        assert!((mean - expected).abs() < 0.02 * expected, "{mean} vs {expected}");
        assert!((s2 / draws as f64 - sd * sd).abs() < 0.03 * sd * sd);
    }

    #[test]
    fn agrees_with_quadrature() {
        let x = DMatrix::from_row_slice(
            6,
            2,
            &[0.5, 1.0, -1.2, 0.3, 0.8, -0.7, 1.5, 1.1, -0.4, -1.3, 0.2, 0.9],
        );
        let y = vec![1, 0, 1, 1, 0, 0];
        let data = Dataset::new(x.clone(), y.clone(), 25.0).unwrap();
        let x_new = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.3, -2.0, -1.0, 1.0]);
        let exact = exact_predictive_many(&x, &y, 25.0, &x_new, &QuadratureSpec::default()).unwrap();
        let spec = GibbsSpec { burn_in: 1_000, draws: 20_000, seed: 11 };
        let out = hmc_predictive(&data, &x_new, &spec).unwrap();
        for r in 0..3 {
            let se = out.standard_errors[r];
            assert!((out.probs[r] - exact[r]).abs() < 4.0 * se.max(1e-4), "row {r}: {} vs {}", out.probs[r], exact[r]);
        }
    }

    #[test]
    fn seeded_chains_repeat() {
        let x = DMatrix::from_row_slice(3, 4, &[1.0, 0.2, -0.4, 1.0, 0.3, -0.7, 2.0, 0.1, 0.0, 0.5, 0.5, -1.0]);
        let data = Dataset::new(x, vec![1, 0, 1], 4.0).unwrap();
        let x_new = DMatrix::from_row_slice(1, 4, &[0.5, 0.5, 0.0, 1.0]);
        let spec = GibbsSpec { burn_in: 10, draws: 300, seed: 2 };
        assert_eq!(hmc_predictive(&data, &x_new, &spec).unwrap(), hmc_predictive(&data, &x_new, &spec).unwrap());
    }
}
