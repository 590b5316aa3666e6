use nalgebra::DVector;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::special::zeta1_zeta2;

use super::EpState;

/// Guard on `1 - k_i x_iᵀv_i` when removing a site.
pub const CAVITY_EPSILON: f64 = 1e-12;

/// Guard on `1 + Δk x_iᵀv_i` when refreshing the covariance.
pub const UPDATE_EPSILON: f64 = 1e-12;

/// Per-site natural parameters: site `i` contributes `Q_i = k_i x_i x_iᵀ` and
/// `r_i = m_i x_i` to the global precision and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteState {
    pub k: DVector<f64>,
    pub m: DVector<f64>,
}

impl SiteState {
    pub fn zeros(n: usize) -> Self {
        Self {
            k: DVector::zeros(n),
            m: DVector::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }
}

/// Cavity quantities for site `i`.
#[derive(Debug, Clone)]
pub struct Cavity {
    /// `v_i = Q⁻¹x_i`.
    pub v: DVector<f64>,
    /// `x_iᵀv_i`.
    pub xv: f64,
    /// `w_i = Q_{-i}⁻¹x_i`.
    pub w: DVector<f64>,
    /// `x_iᵀw_i`, the cavity variance of the linear predictor.
    pub d: f64,
    /// `w_iᵀr_{-i}`, the cavity mean of the linear predictor.
    pub c: f64,
}

/// Removes site `i` from the global approximation by Sherman–Morrison:
/// `w_i = v_i / (1 - k_i x_iᵀv_i)`.
pub fn cavity<S: EpState + ?Sized>(state: &S, data: &Dataset, i: usize) -> Result<Cavity> {
    let v = state.projection(data, i);
    cavity_from_projection(state, data, i, v)
}

pub(crate) fn cavity_from_projection<S: EpState + ?Sized>(
    state: &S,
    data: &Dataset,
    i: usize,
    v: DVector<f64>,
) -> Result<Cavity> {
    let x = data.row(i);
    let sites = state.sites();
    let (k_i, m_i) = (sites.k[i], sites.m[i]);
    let xv = crate::linalg::dot(x, v.as_slice());
    let denom = 1.0 - k_i * xv;
    if denom <= CAVITY_EPSILON {
        return Err(Error::CavityBreakdown { site: i, denom });
    }
    let w = &v / denom;
    let d = xv / denom;
    let r = state.natural_mean();
    // c = w'(r - m_i x_i)
    let c = w.dot(r) - m_i * d;
    Ok(Cavity { v, xv, w, d, c })
}

/// Moment-matched site parameters for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteUpdate {
    pub k: f64,
    pub m: f64,
    pub tau: f64,
    pub s: f64,
}

/// Closed-form site refresh from the extended skew-normal hybrid moments.
///
/// `d` and `c` are the cavity variance and mean of `x_iᵀβ`.
pub fn site_update(y: u8, d: f64, c: f64) -> Result<SiteUpdate> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain {
            op: "site_update",
            reason: format!("cavity variance d_i = {d} must be positive"),
        });
    }
    if !c.is_finite() {
        return Err(Error::NonFinite(c, "site_update"));
    }
    let sign = if y == 1 { 1.0 } else { -1.0 };
    let s = sign / (1.0 + d).sqrt();
    let tau = s * c;
    let (z1, z2) = zeta1_zeta2(tau)?;
    // Far in the right tail the exact precision is below the subnormal range;
    // saturate so that accepted sites keep k > 0.
    let k = (-z2 / (1.0 + d + z2 * d)).max(f64::from_bits(1));
    let m = z1 * s + k * c + k * z1 * s * d;
    debug_assert!(k > 0.0, "non-positive site precision {k} at tau = {tau}");
    Ok(SiteUpdate { k, m, tau, s })
}

/// Applied change to one site after damping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteChange {
    pub dk: f64,
    pub dm: f64,
    /// Stored site parameters after the change.
    pub k: f64,
    pub m: f64,
}

/// Damped deltas and the Sherman–Morrison gain `Δk / (1 + Δk x_iᵀv_i)`.
pub(crate) fn damped_change(
    sites: &SiteState,
    i: usize,
    k_new: f64,
    m_new: f64,
    damping: f64,
    xv: f64,
) -> Result<(SiteChange, f64)> {
    let (k_old, m_old) = (sites.k[i], sites.m[i]);
    let (k_damped, m_damped) = if damping == 1.0 {
        (k_new, m_new)
    } else {
        (
            (1.0 - damping) * k_old + damping * k_new,
            (1.0 - damping) * m_old + damping * m_new,
        )
    };
    let dk = k_damped - k_old;
    let dm = m_damped - m_old;
    let denom = 1.0 + dk * xv;
    if denom <= UPDATE_EPSILON {
        return Err(Error::UpdateRejected { site: i, denom });
    }
    Ok((
        SiteChange {
            dk,
            dm,
            k: k_damped,
            m: m_damped,
        },
        dk / denom,
    ))
}
