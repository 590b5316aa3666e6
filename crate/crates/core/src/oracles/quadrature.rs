//! Exact-posterior quadrature for `p <= 2` and adaptive one-dimensional
//! integration of tilted Gaussians.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::ep::SiteState;
use crate::error::{Error, Result};
use crate::special::{cdf_unchecked, log_cdf_unchecked, std_normal_pdf};

/// Tensor-grid settings. The box spans `±half_width` prior standard
/// deviations in every coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub half_width: f64,
    pub nodes_per_dim: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            half_width: 10.0,
            nodes_per_dim: 2001,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_dim < 101 || self.nodes_per_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "nodes_per_dim must be odd and at least 101, got {}",
                self.nodes_per_dim
            )));
        }
        if !(self.half_width >= 6.0) {
            return Err(Error::Config(format!(
                "half_width must be at least 6, got {}",
                self.half_width
            )));
        }
        Ok(())
    }

    /// Same box with the node spacing halved (every old node is kept).
    pub fn refined(&self) -> Self {
        Self {
            nodes_per_dim: 2 * self.nodes_per_dim - 1,
            ..*self
        }
    }
}

/// `Pr[y_new = 1 | y]` under the exact probit posterior, for one covariate vector.
pub fn exact_predictive_quadrature(
    data: &Dataset,
    x_new: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    let rows = DMatrix::from_row_slice(1, x_new.len(), x_new);
    Ok(exact_predictive_many(data.design(), data.labels(), data.prior_variance(), &rows, spec)?[0])
}

/// Exact predictive probabilities for every row of `x_new`, sharing one pass
/// over the grid. `x` may have zero rows, in which case the posterior is the prior.
///
/// The unnormalized posterior `φ_p(β; 0, ν²I) Π Φ((2y_i - 1)x_iᵀβ)` is evaluated
/// in log space; each grid line is rescaled by its own maximum and the lines
/// are merged in a fixed order, so the result does not depend on threading.
pub fn exact_predictive_many(
    x: &DMatrix<f64>,
    y: &[u8],
    prior_variance: f64,
    x_new: &DMatrix<f64>,
    spec: &QuadratureSpec,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let p = x.ncols();
    if p == 0 || p > 2 {
        return Err(Error::Unsupported(format!(
            "quadrature oracle supports p in {{1, 2}}, got p = {p}"
        )));
    }
    if x_new.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: x_new.ncols(),
        });
    }
    let n_nodes = spec.nodes_per_dim;
    let sd = prior_variance.sqrt();
    let lo = -spec.half_width * sd;
    let step = 2.0 * spec.half_width * sd / (n_nodes - 1) as f64;
    let node = |j: usize| lo + step * j as f64;
    let weight = |j: usize| if j == 0 || j + 1 == n_nodes { 0.5 } else { 1.0 };
    let signs: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
    let n_new = x_new.nrows();

    let log_density = |b0: f64, b1: f64| {
        let mut acc = -(b0 * b0 + b1 * b1) / (2.0 * prior_variance);
        for (i, s) in signs.iter().enumerate() {
            let eta = if p == 1 { x[(i, 0)] * b0 } else { x[(i, 0)] * b0 + x[(i, 1)] * b1 };
            acc += log_cdf_unchecked(s * eta);
        }
        acc
    };

    // One grid line per outer index: (line max, mass, mass-weighted Φ per x_new).
    let line = |outer: usize| -> (f64, f64, Vec<f64>) {
        let points: Vec<(f64, f64, f64)> = if p == 1 {
            let b = node(outer);
            vec![(b, 0.0, weight(outer))]
        } else {
            let b0 = node(outer);
            (0..n_nodes)
                .map(|j| (b0, node(j), weight(outer) * weight(j)))
                .collect()
        };
        let logs: Vec<f64> = points.iter().map(|&(b0, b1, _)| log_density(b0, b1)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut mass = 0.0;
        let mut acc = vec![0.0; n_new];
        for (&(b0, b1, w), &l) in points.iter().zip(&logs) {
            let wt = w * (l - max).exp();
            mass += wt;
            for (r, a) in acc.iter_mut().enumerate() {
                let eta = if p == 1 { x_new[(r, 0)] * b0 } else { x_new[(r, 0)] * b0 + x_new[(r, 1)] * b1 };
                *a += wt * cdf_unchecked(eta);
            }
        }
        (max, mass, acc)
    };

    let lines: Vec<(f64, f64, Vec<f64>)> = if p == 1 {
        (0..n_nodes).map(line).collect()
    } else {
        (0..n_nodes).into_par_iter().map(line).collect()
    };
    let global = lines.iter().map(|l| l.0).fold(f64::NEG_INFINITY, f64::max);
    if !global.is_finite() {
        return Err(Error::QuadratureUnderflow);
    }
    let mut mass = 0.0;
    let mut acc = vec![0.0; n_new];
    for (max, m, a) in &lines {
        let scale = (max - global).exp();
        mass += scale * m;
        for (t, v) in acc.iter_mut().zip(a) {
            *t += scale * v;
        }
    }
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::QuadratureUnderflow);
    }
    Ok(acc.into_iter().map(|a| a / mass).collect())
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `eps`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, eps: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, eps, 50)
}

/// Mean and variance of the one-dimensional hybrid
/// `h(β) ∝ Φ(sign · x · β) N(β; mean, var)`, by adaptive quadrature.
pub fn tilted_moments(mean: f64, var: f64, x: f64, sign: f64) -> (f64, f64) {
    let sd = var.sqrt();
    // Standardized coordinate t, β = mean + sd t.
    let density = |t: f64| std_normal_pdf(t) * cdf_unchecked(sign * x * (mean + sd * t));
    let (a, b) = (-30.0, 30.0);
    let eps = 1e-15;
    // Split at the mode region so the adaptive rule never skips the bulk.
    let integrate = |g: &dyn Fn(f64) -> f64| {
        let knots = [a, -8.0, -2.0, 0.0, 2.0, 8.0, b];
        knots
            .windows(2)
            .map(|w| adaptive_simpson(&g, w[0], w[1], eps))
            .sum::<f64>()
    };
    let z = integrate(&density);
    let m1 = integrate(&|t| t * density(t)) / z;
    let m2 = integrate(&|t| t * t * density(t)) / z;
    (mean + sd * m1, var * (m2 - m1 * m1))
}

/// For a one-covariate model, the absolute gaps `(|Δmean|, |Δvar|)` between
/// each site's hybrid distribution, computed by quadrature from the cavity,
/// and the global approximation `q`. Both vanish at an exact EP fixed point.
/// Sites with a zero covariate give `(0, 0)`.
pub fn scalar_moment_gaps(data: &Dataset, sites: &SiteState) -> Result<Vec<(f64, f64)>> {
    if data.p() != 1 {
        return Err(Error::Unsupported(format!(
            "moment gaps need p = 1, got p = {}",
            data.p()
        )));
    }
    if sites.k.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            found: sites.k.len(),
        });
    }
    let x = |i: usize| data.row(i)[0];
    let mut precision = 1.0 / data.prior_variance();
    let mut shift = 0.0;
    for i in 0..data.n() {
        precision += sites.k[i] * x(i) * x(i);
        shift += sites.m[i] * x(i);
    }
    let (mean, var) = (shift / precision, 1.0 / precision);
    (0..data.n())
        .map(|i| {
            if data.is_degenerate(i) {
                return Ok((0.0, 0.0));
            }
            let cav_precision = precision - sites.k[i] * x(i) * x(i);
            if !(cav_precision > 0.0) {
                return Err(Error::CavityBreakdown {
                    site: i,
                    denom: cav_precision,
                });
            }
            let cav_mean = (shift - sites.m[i] * x(i)) / cav_precision;
            let (h_mean, h_var) = tilted_moments(cav_mean, 1.0 / cav_precision, x(i), data.sign(i));
            Ok(((h_mean - mean).abs(), (h_var - var).abs()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::zeta1;

    fn scalar(xs: &[f64], ys: &[u8], nu2: f64) -> Dataset {
        Dataset::new(DMatrix::from_column_slice(xs.len(), 1, xs), ys.to_vec(), nu2).unwrap()
    }

    #[test]
    fn empty_likelihood_gives_one_half() {
        let spec = QuadratureSpec::default();
        let x_new = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, 2.0, 0.5]);
        let probs = exact_predictive_many(&DMatrix::zeros(0, 2), &[], 4.0, &x_new, &spec).unwrap();
        for p in probs {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn single_observation_closed_form() {
        // With one site the posterior is skew-normal and
        // Pr[y_new = 1 | y] = Φ₂(0, 0; corr) / Φ(0), bivariate orthant with
        // correlation ρ = ν²x x_new / sqrt((1+ν²x²)(1+ν²x_new²)); for x = x_new = 1, ν² = 1 it
        // is (1/4 + asin(1/2)/(2π)) / (1/2) = 2/3.
        let data = scalar(&[1.0], &[1], 1.0);
        let p = exact_predictive_quadrature(&data, &[1.0], &QuadratureSpec::default()).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-10, "{p}");
    }

    #[test]
    fn flipping_the_label_mirrors_the_prediction() {
        let spec = QuadratureSpec::default();
        let up = exact_predictive_quadrature(&scalar(&[1.0], &[1], 1.0), &[1.0], &spec).unwrap();
        let flipped = scalar(&[1.0], &[0], 1.0);
        let mirrored = exact_predictive_quadrature(&flipped, &[-1.0], &spec).unwrap();
        let same_point = exact_predictive_quadrature(&flipped, &[1.0], &spec).unwrap();
        assert!((up - mirrored).abs() < 1e-12);
        assert!((up - (1.0 - same_point)).abs() < 1e-12);
    }

    #[test]
    fn node_doubling_is_converged() {
        let data = scalar(&[0.4, -1.1, 2.0, 0.9, -0.3], &[1, 0, 1, 1, 0], 25.0);
        let spec = QuadratureSpec::default();
        for x_new in [0.7, -2.5] {
            let a = exact_predictive_quadrature(&data, &[x_new], &spec).unwrap();
            let b = exact_predictive_quadrature(&data, &[x_new], &spec.refined()).unwrap();
            assert!((a - b).abs() < 1e-8);
            assert!(a > 0.0 && a < 1.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = Dataset::new(DMatrix::zeros(1, 3), vec![1], 1.0).unwrap();
        assert!(matches!(
            exact_predictive_quadrature(&data, &[0.0; 3], &QuadratureSpec::default()),
            Err(Error::Unsupported(_))
        ));
        let spec = QuadratureSpec { nodes_per_dim: 100, half_width: 10.0 };
        assert!(spec.validate().is_err());
        let spec = QuadratureSpec { nodes_per_dim: 101, half_width: 5.0 };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn tilted_moments_match_closed_form() {
        // Φ(x β) N(β; μ, σ²): with z = xμ / sqrt(1 + x²σ²) the mean is
        // μ + xσ² ζ1(z) / sqrt(1 + x²σ²).
        for (mu, var, x) in [(0.0, 1.0, 1.0), (1.5, 0.3, -2.0), (-4.0, 2.0, 0.5)] {
            let (m, v) = tilted_moments(mu, var, x, 1.0);
            let s = (1.0 + x * x * var).sqrt();
            let z = x * mu / s;
            let z1 = zeta1(z).unwrap();
            let mean = mu + x * var * z1 / s;
            let variance = var - (x * var).powi(2) * z1 * (z + z1) / (s * s);
            assert!((m - mean).abs() < 1e-12, "{mu} {var} {x}");
            assert!((v - variance).abs() < 1e-12);
        }
    }

    #[test]
    fn converged_scalar_fits_match_moments() {
        use crate::ep::{fit, EngineChoice, EpConfig};
        let cfg = EpConfig { tol: 1e-12, ..EpConfig::default() };
        let data = scalar(&[1.0, -0.5, 2.0], &[1, 0, 1], 1.0);
        let model = fit(&data, &cfg, EngineChoice::Dense).unwrap();
        for (dm, dv) in scalar_moment_gaps(&data, &model.sites).unwrap() {
            assert!(dm < 1e-9 && dv < 1e-9, "{dm} {dv}");
        }
        // Before any sweep the prior sites do not match.
        let blank = SiteState::zeros(3);
        let gaps = scalar_moment_gaps(&data, &blank).unwrap();
        assert!(gaps.iter().any(|&(dm, _)| dm > 0.1));
        let wide = Dataset::new(DMatrix::zeros(2, 2), vec![1, 0], 1.0).unwrap();
        assert!(matches!(scalar_moment_gaps(&wide, &SiteState::zeros(2)), Err(Error::Unsupported(_))));
    }
}
