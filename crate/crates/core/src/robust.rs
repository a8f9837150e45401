//! Median / interquartile-range estimates of a Gaussian's location and scale.

use crate::error::{Error, Result};
use crate::math::quantile_sorted;

/// `2 * Phi^-1(0.75)`: the interquartile range of a unit Gaussian.
pub const IQR_TO_SIGMA: f64 = 1.348_979_500_392_163_5;

/// Default floor on the robust standard deviation.
pub const DEFAULT_S_MIN: f64 = 1e-4;

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::TooFewValues { needed: 1, got: 0 });
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&v, 0.5))
}

/// `(median, max(IQR / 1.349, s_min))`. Needs at least two values.
pub fn robust_location_scale(values: &[f64], s_min: f64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite value in robust estimate"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mu = quantile_sorted(&v, 0.5);
    let iqr = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
    Ok((mu, (iqr / IQR_TO_SIGMA).max(s_min)))
}
