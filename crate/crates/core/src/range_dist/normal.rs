//! Standard normal helpers.

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub(crate) fn density(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Φ(x) without input validation.
#[inline]
pub(crate) fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// 1 − Φ(x), accurate far into the upper tail.
#[inline]
pub(crate) fn upper_tail(x: f64) -> f64 {
    0.5 * erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Φ⁻¹(p) for 0 < p < 1 without validation. One Newton step against [`cdf`]
/// (or [`upper_tail`] above the median) keeps the pair mutually consistent.
pub(crate) fn quantile(p: f64) -> f64 {
    if p > 0.5 {
        -lower_quantile(1.0 - p)
    } else {
        lower_quantile(p)
    }
}

/// Φ⁻¹(p) for p ≤ 0.5, where p is carried at full relative precision.
fn lower_quantile(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    let d = density(x);
    if d > 0.0 {
        x -= (cdf(x) - p) / d;
    }
    x
}

/// Standard normal distribution function.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("normal cdf requires a finite argument, got {x}")));
    }
    Ok(cdf(x))
}

/// Standard normal quantile function.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("normal quantile requires 0 < p < 1, got {p}")));
    }
    Ok(quantile(p))
}
