//! Small regression helpers.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Ordinary least squares fit `y ≈ intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit<T = f64> {
    pub slope: T,
    pub intercept: T,
    pub stderr_slope: T,
    pub r_squared: T,
    /// Sum of squared residuals.
    pub ssr: T,
}

pub fn ols<T: Real>(x: &[T], y: &[T]) -> Result<LineFit<T>> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::Argument(format!(
            "least squares needs two equal-length vectors with at least 2 points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let nf = T::from_count(n);
    let mx = x.iter().copied().sum::<T>() / nf;
    let my = y.iter().copied().sum::<T>() / nf;
    let sxx: T = x.iter().map(|v| (*v - mx) * (*v - mx)).sum();
    let sxy: T = x.iter().zip(y).map(|(a, b)| (*a - mx) * (*b - my)).sum();
    let syy: T = y.iter().map(|v| (*v - my) * (*v - my)).sum();
    if !(sxx > T::zero()) {
        return Err(Error::Argument("least squares needs at least two distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: T = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = *b - intercept - slope * *a;
            r * r
        })
        .sum();
    let stderr_slope = if n > 2 {
        (ssr / T::from_count(n - 2) / sxx).sqrt()
    } else {
        T::zero()
    };
    let r_squared = if syy > T::zero() {
        T::one() - ssr / syy
    } else {
        T::one()
    };
    Ok(LineFit {
        slope,
        intercept,
        stderr_slope,
        r_squared,
        ssr,
    })
}
