//! Locale-independent decimal output with a fixed number of significant digits.

/// Significant digits used for every number the CLI writes.
pub const SIG_DIGITS: usize = 12;

/// `x` with [`SIG_DIGITS`] significant digits. Positional notation is used for
/// decimal exponents in `[-5, 12)`, scientific notation otherwise.
///
/// ```
/// use probit_ep_cli::format::fmt_sig;
/// assert_eq!(fmt_sig(0.5), "0.500000000000");
/// assert_eq!(fmt_sig(1234.5), "1234.50000000");
/// assert_eq!(fmt_sig(2.5e-9), "2.50000000000e-9");
/// ```
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return format!("{:.*}", SIG_DIGITS - 1, 0.0);
    }
    // Rounding to SIG_DIGITS first fixes the exponent (0.99999999999951 → 1.0).
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}
