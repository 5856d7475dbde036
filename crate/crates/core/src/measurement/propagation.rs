//! Variance propagation for independent measurement errors.

use crate::error::{Error, Result};

/// Variance of `a ± b`.
pub fn var_sum(sigma_a: f64, sigma_b: f64) -> f64 {
    sigma_a * sigma_a + sigma_b * sigma_b
}

/// Variance of a sum of any number of independent terms.
pub fn var_sum_all<I: IntoIterator<Item = f64>>(sigmas: I) -> f64 {
    sigmas.into_iter().map(|s| s * s).sum()
}

/// Variance of a product or quotient `f` of the given `(value, sigma)`
/// factors: `f²·Σ(σᵢ/vᵢ)²`.
pub fn var_product(f: f64, factors: &[(f64, f64)]) -> Result<f64> {
    let mut rel = 0.0;
    for (index, &(value, sigma)) in factors.iter().enumerate() {
        if value == 0.0 {
            return Err(Error::ZeroFactor { index });
        }
        rel += (sigma / value).powi(2);
    }
    Ok(f * f * rel)
}
