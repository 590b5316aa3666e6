use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};

use crate::special::{cdf_unchecked, quantile_unchecked};

/// Which side of zero a truncated draw must land on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `z > 0`.
    Positive,
    /// `z < 0`.
    Negative,
}

impl Side {
    pub fn from_label(y: u8) -> Self {
        if y == 1 {
            Side::Positive
        } else {
            Side::Negative
        }
    }
}

/// Beyond this many standard deviations from the truncation point the
/// inverse-cdf route gives way to rejection.
const INVERSE_CDF_LIMIT: f64 = 5.0;

/// Draw from `N(mean, 1)` restricted to one side of zero.
pub fn truncated_normal_draw<R: Rng + ?Sized>(mean: f64, side: Side, rng: &mut R) -> f64 {
    debug_assert!(mean.is_finite());
    match side {
        Side::Positive => positive_part(mean, rng),
        Side::Negative => -positive_part(-mean, rng),
    }
}

/// `N(mean, 1)` conditioned on `z > 0`.
fn positive_part<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    loop {
        let z = if mean > INVERSE_CDF_LIMIT {
            // Truncation point more than 5 sd below the mean: plain rejection
            // accepts with probability above 1 - 3e-7.
            let e: f64 = StandardNormal.sample(rng);
            mean + e
        } else if mean >= -INVERSE_CDF_LIMIT {
            // z = mean + e with e > -mean, i.e. -e ~ N(0,1) truncated below mean.
            let u: f64 = Open01.sample(rng);
            mean - quantile_unchecked(u * cdf_unchecked(mean))
        } else {
            // Far tail: exponential proposal with the optimal rate for the
            // truncation point a = -mean (Robert, 1995).
            let a = -mean;
            let rate = 0.5 * (a + (a * a + 4.0).sqrt());
            let e = a + Distribution::<f64>::sample(&Exp1, rng) / rate;
            let u: f64 = rng.random();
            if u > (-0.5 * (e - rate) * (e - rate)).exp() {
                continue;
            }
            mean + e
        };
        if z > 0.0 {
            return z;
        }
    }
}
