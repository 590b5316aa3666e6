use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Binary responses, covariate rows and the prior variance `ν²` of the
/// probit model `y_i | β ~ Bern(Φ(x_iᵀβ))`, `β ~ N_p(0, ν² I_p)`.
///
/// Rows are kept both as the `n × p` design matrix and as contiguous
/// columns of its transpose, which is what the EP sweeps walk over.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    xt: DMatrix<f64>,
    y: Vec<u8>,
    prior_variance: f64,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: Vec<u8>, prior_variance: f64) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidData(format!("empty design matrix ({n} x {p})")));
        }
        if y.len() != n {
            return Err(Error::InvalidData(format!(
                "{} labels for {n} covariate rows",
                y.len()
            )));
        }
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(Error::InvalidData(format!(
                "label {} at row {i} is not 0 or 1",
                y[i]
            )));
        }
        if !(prior_variance.is_finite() && prior_variance > 0.0) {
            return Err(Error::InvalidData(format!(
                "prior variance must be finite and positive, got {prior_variance}"
            )));
        }
        if let Some(idx) = x.iter().position(|v| !v.is_finite()) {
            let (row, col) = (idx % n, idx / n);
            return Err(Error::InvalidData(format!(
                "non-finite covariate at row {row}, column {col}"
            )));
        }
        let xt = x.transpose();
        Ok(Self { x, xt, y, prior_variance })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.xt.nrows()
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    /// Design matrix, one row per observation.
    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Transposed design, `p × n`; column `i` is `x_i`.
    pub fn design_t(&self) -> &DMatrix<f64> {
        &self.xt
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    /// Covariate vector of observation `i` as a contiguous slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.xt.as_slice()[i * p..(i + 1) * p]
    }

    /// `2 y_i - 1`.
    #[inline]
    pub fn sign(&self, i: usize) -> f64 {
        if self.y[i] == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// Whether `x_i` is identically zero; such a site carries no information.
    pub fn is_degenerate(&self, i: usize) -> bool {
        self.row(i).iter().all(|&v| v == 0.0)
    }
}
