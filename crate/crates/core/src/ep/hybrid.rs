use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::spd_inverse;

use super::site::cavity;
use super::EpState;

/// Parameters of the extended skew-normal hybrid `SN_p(ξ_i, Ω_i, α_i, τ_i)`
/// obtained by multiplying the cavity `N(ξ_i, Ω_i)` with `Φ((2y_i - 1)x_iᵀβ)`.
///
/// Diagnostic only: `Ω_i` is formed and inverted densely.
#[derive(Debug, Clone)]
pub struct HybridSnParams {
    pub xi: DVector<f64>,
    pub omega: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub tau: f64,
    /// `diag(Ω_i)^{1/2}` as a diagonal matrix.
    pub scale: DMatrix<f64>,
    /// Cavity precision `Q_{-i}` and shift `r_{-i}`.
    pub precision: DMatrix<f64>,
    pub shift: DVector<f64>,
}

pub fn hybrid_params<S: EpState + ?Sized>(
    state: &S,
    data: &Dataset,
    i: usize,
) -> Result<HybridSnParams> {
    // Same breakdown guard as the hot path.
    cavity(state, data, i)?;

    let p = data.p();
    let sites = state.sites();
    let mut precision = DMatrix::identity(p, p) / data.prior_variance();
    for j in (0..data.n()).filter(|&j| j != i) {
        let x = DVector::from_column_slice(data.row(j));
        precision.ger(sites.k[j], &x, &x, 1.0);
    }
    let x_i = DVector::from_column_slice(data.row(i));
    let shift = state.natural_mean() - &x_i * sites.m[i];
    let omega = spd_inverse(precision.clone())
        .ok_or_else(|| Error::Factorization(format!("cavity precision of site {i} is not SPD")))?;
    let xi = &omega * &shift;
    let scale = DMatrix::from_diagonal(&omega.diagonal().map(f64::sqrt));
    let sign = data.sign(i);
    let alpha = &scale * &x_i * sign;
    let quad = x_i.dot(&(&omega * &x_i));
    let tau = sign * x_i.dot(&xi) / (1.0 + quad).sqrt();
    Ok(HybridSnParams {
        xi,
        omega,
        alpha,
        tau,
        scale,
        precision,
        shift,
    })
}
