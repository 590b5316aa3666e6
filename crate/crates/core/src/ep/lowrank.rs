use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::Result;
use crate::linalg::column;
use crate::predictive::{Covariance, GaussianPosterior};

use super::site::{damped_change, SiteChange, SiteState};
use super::{Engine, EpState};

/// EP state that never forms a `p × p` matrix. It keeps `v_j = Q⁻¹x_j` for
/// every observation as the columns of `V` (`p × n`); a site refresh touches
/// every column once, `O(pn)`, so a sweep costs `O(pn²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpStateLowRank {
    pub v: DMatrix<f64>,
    pub r: DVector<f64>,
    pub sites: SiteState,
}

impl EpStateLowRank {
    /// Prior-only state: `v_j = ν²x_j`, `r = 0`, all sites zero.
    pub fn new(data: &Dataset) -> Self {
        Self {
            v: data.design_t() * data.prior_variance(),
            r: DVector::zeros(data.p()),
            sites: SiteState::zeros(data.n()),
        }
    }
}

impl EpState for EpStateLowRank {
    fn engine(&self) -> Engine {
        Engine::LowRank
    }

    fn sites(&self) -> &SiteState {
        &self.sites
    }

    fn natural_mean(&self) -> &DVector<f64> {
        &self.r
    }

    fn projection(&self, _data: &Dataset, i: usize) -> DVector<f64> {
        DVector::from_column_slice(column(&self.v, i))
    }

    fn apply_projected(
        &mut self,
        data: &Dataset,
        i: usize,
        v_i: &DVector<f64>,
        xv: f64,
        k_new: f64,
        m_new: f64,
        damping: f64,
    ) -> Result<SiteChange> {
        let (change, gain) = damped_change(&self.sites, i, k_new, m_new, damping, xv)?;
        if change.dk != 0.0 {
            // v_j <- v_j - gain (x_jᵀv_i) v_i for every j.
            let xv_all = data.design() * v_i;
            self.v.ger(-gain, v_i, &xv_all, 1.0);
            self.sites.k[i] = change.k;
        }
        if change.dm != 0.0 {
            let x = data.row(i);
            for (rj, xj) in self.r.iter_mut().zip(x) {
                *rj += change.dm * xj;
            }
            self.sites.m[i] = change.m;
        }
        Ok(change)
    }

    /// `ξ = Q⁻¹r = Q⁻¹Xᵀm = Vm`, with the covariance left in factored form.
    fn posterior(&self, data: &Dataset) -> GaussianPosterior {
        GaussianPosterior {
            xi: &self.v * &self.sites.m,
            prior_variance: data.prior_variance(),
            covariance: Covariance::Factored {
                v: self.v.clone(),
                k: self.sites.k.clone(),
                xt: data.design_t().clone(),
            },
        }
    }
}
