use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::Result;
use crate::predictive::{Covariance, GaussianPosterior};

use super::site::{damped_change, SiteChange, SiteState};
use super::{Engine, EpState};

/// EP state carrying the explicit covariance `Σ = Q⁻¹`. Each site refresh is a
/// rank-one Sherman–Morrison update, `O(p²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpStateDense {
    pub sigma: DMatrix<f64>,
    pub r: DVector<f64>,
    pub sites: SiteState,
}

impl EpStateDense {
    /// Prior-only state: `Σ = ν²I`, `r = 0`, all sites zero.
    pub fn new(data: &Dataset) -> Self {
        let p = data.p();
        Self {
            sigma: DMatrix::identity(p, p) * data.prior_variance(),
            r: DVector::zeros(p),
            sites: SiteState::zeros(data.n()),
        }
    }
}

impl EpState for EpStateDense {
    fn engine(&self) -> Engine {
        Engine::Dense
    }

    fn sites(&self) -> &SiteState {
        &self.sites
    }

    fn natural_mean(&self) -> &DVector<f64> {
        &self.r
    }

    fn projection(&self, data: &Dataset, i: usize) -> DVector<f64> {
        let x = DVector::from_column_slice(data.row(i));
        &self.sigma * x
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
            self.sigma.ger(-gain, v_i, v_i, 1.0);
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

    fn posterior(&self, data: &Dataset) -> GaussianPosterior {
        GaussianPosterior {
            xi: &self.sigma * &self.r,
            prior_variance: data.prior_variance(),
            covariance: Covariance::Dense(self.sigma.clone()),
        }
    }
}
