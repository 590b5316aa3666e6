//! Standard normal pdf/cdf and the first two derivatives of `log Φ`.
//!
//! `zeta1(x) = φ(x)/Φ(x)` and `zeta2(x) = -zeta1(x) * (zeta1(x) + x)` drive every
//! EP site update. For `x` below [`ZETA1_SWITCH`] the ratio `φ/Φ` is evaluated
//! through the continued fraction of the Gaussian Mills ratio, which never forms
//! the underflowing numerator and denominator and also yields `zeta1(x) + x`
//! without cancellation.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Below this argument `zeta1` switches to the continued-fraction route.
pub const ZETA1_SWITCH: f64 = -8.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Smallest positive subnormal. `zeta1` saturates here once `φ(x)` itself is
/// below the representable range (x above roughly 38.5), so the sign
/// invariant `zeta1 > 0` survives underflow.
const ZETA1_FLOOR: f64 = f64::from_bits(1);

const CF_EPS: f64 = 1e-16;
const CF_MAX_TERMS: usize = 5_000;

fn check(x: f64, op: &'static str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(x, op))
    }
}

/// Standard normal density. Total function; NaN propagates.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal cdf `Φ(x)` via the complementary error function.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    check(x, "std_normal_cdf")?;
    Ok(cdf_unchecked(x))
}

#[inline]
pub(crate) fn cdf_unchecked(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `log Φ(x)`, finite for every finite `x`.
pub fn log_std_normal_cdf(x: f64) -> Result<f64> {
    check(x, "log_std_normal_cdf")?;
    Ok(log_cdf_unchecked(x))
}

#[inline]
pub(crate) fn log_cdf_unchecked(x: f64) -> f64 {
    if x < ZETA1_SWITCH {
        // log Φ(x) = log φ(x) - log ζ1(x)
        let tail = mills_tail(-x);
        -0.5 * x * x - LN_SQRT_2PI - (-x + tail).ln()
    } else if x > 0.0 {
        (-cdf_unchecked(-x)).ln_1p()
    } else {
        cdf_unchecked(x).ln()
    }
}

/// `ζ1(x) = φ(x)/Φ(x)`, the derivative of `log Φ`.
pub fn zeta1(x: f64) -> Result<f64> {
    check(x, "zeta1")?;
    Ok(zeta_pair(x).0)
}

/// `ζ2(x) = -ζ1(x)² - x ζ1(x)`, the second derivative of `log Φ`; always in `(-1, 0)`.
pub fn zeta2(x: f64) -> Result<f64> {
    check(x, "zeta2")?;
    Ok(zeta_pair(x).1)
}

/// Both ratios at once, sharing the expensive evaluation.
pub fn zeta1_zeta2(x: f64) -> Result<(f64, f64)> {
    check(x, "zeta1_zeta2")?;
    Ok(zeta_pair(x))
}

fn zeta_pair(x: f64) -> (f64, f64) {
    if x < ZETA1_SWITCH {
        let t = -x;
        // ζ1(x) = t + a and ζ1(x) + x = a, with a the tail of the Mills-ratio fraction.
        let a = mills_tail(t);
        let z1 = t + a;
        (z1, -z1 * a)
    } else {
        let z1 = zeta1_by_ratio(x).max(ZETA1_FLOOR);
        (z1, -z1 * (z1 + x))
    }
}

/// Direct quotient route, accurate for `x >= ZETA1_SWITCH - 1`.
#[doc(hidden)]
pub fn zeta1_by_ratio(x: f64) -> f64 {
    std_normal_pdf(x) / cdf_unchecked(x)
}

/// Continued-fraction route, accurate for `x <= 0`.
#[doc(hidden)]
pub fn zeta1_by_fraction(x: f64) -> f64 {
    -x + mills_tail(-x)
}

/// `a(t) = 1/(t + 2/(t + 3/(t + ...)))`, evaluated with the modified Lentz method.
///
/// The Mills ratio is `R(t) = (1 - Φ(t))/φ(t) = 1/(t + a(t))`.
fn mills_tail(t: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = TINY;
    let mut c = f;
    let mut d = 0.0;
    for j in 1..=CF_MAX_TERMS {
        let a_j = if j == 1 { 1.0 } else { j as f64 };
        d = t + a_j * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = t + a_j / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < CF_EPS {
            break;
        }
    }
    f
}

/// Inverse standard normal cdf for `p` in `(0, 1)`.
///
/// Rational starting point (Acklam) refined by two Halley steps against
/// [`std_normal_cdf`].
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            op: "std_normal_quantile",
            reason: format!("probability {p} outside (0, 1)"),
        });
    }
    Ok(quantile_unchecked(p))
}

pub(crate) fn quantile_unchecked(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let lower_tail = |q: f64| {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };
    let mut x = if p < P_LOW {
        lower_tail(p)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -lower_tail(1.0 - p)
    };

    for _ in 0..2 {
        // Work on the smaller tail so the residual keeps relative precision.
        let e = if x <= 0.0 {
            cdf_unchecked(x) - p
        } else {
            (1.0 - p) - cdf_unchecked(-x)
        };
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        if !u.is_finite() {
            break;
        }
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}
