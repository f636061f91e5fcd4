//! Power-series transport maps between the uniform and normal distributions.
//!
//! `uniform_to_normal` is the quantile `μ + √2 σ erf⁻¹(2z − 1)` expanded
//! around `z = ½`. Its derivative is an infinite sum of squares, which makes
//! truncations of it natural SOS polynomials. `normal_to_uniform` is the
//! normal CDF expanded around the mean. The truncated series are only accurate
//! on central ranges; the `_routed` variants switch to the tabulated CDF
//! outside them.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use super::cdf::{Cdf1D, Normal1d};
use crate::error::{Error, Result};

pub const DEFAULT_U2N_TERMS: usize = 30;
pub const DEFAULT_N2U_TERMS: usize = 40;

/// Central range of `z` where the truncated quantile series is used.
pub const U2N_CENTRAL: (f64, f64) = (0.1, 0.9);
/// Half-width (in σ) around the mean where the truncated CDF series is used.
pub const N2U_CENTRAL_SIGMAS: f64 = 3.0;

/// `c_0 = 1`, `c_k = Σ_{m<k} c_m c_{k-1-m} / ((m+1)(2m+1))`.
pub fn erf_coeffs(terms: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(terms + 1);
    c.push(1.0);
    for k in 1..=terms {
        let ck = (0..k)
            .map(|m| c[m] * c[k - 1 - m] / ((m + 1) * (2 * m + 1)) as f64)
            .sum();
        c.push(ck);
    }
    c
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::DomainError(format!("sigma must be positive, got {sigma}")))
    }
}

/// Truncated series `μ + √2 σ Σ_{k≤K} π^{k+½} c_k (z−½)^{2k+1} / (2k+1)`.
pub fn uniform_to_normal(mu: f64, sigma: f64, z: f64, terms: usize) -> Result<f64> {
    check_sigma(sigma)?;
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::DomainError(format!("z = {z} is outside (0, 1)")));
    }
    let c = erf_coeffs(terms);
    let w = z - 0.5;
    let w2 = w * w;
    let mut pow = w;
    let mut pi_pow = PI.sqrt();
    let mut sum = 0.0;
    for (k, ck) in c.iter().enumerate() {
        sum += pi_pow * ck * pow / (2 * k + 1) as f64;
        pow *= w2;
        pi_pow *= PI;
    }
    Ok(mu + SQRT_2 * sigma * sum)
}

/// Truncated series `½ + π^{-½} Σ_{k≤K} (−1)^k t^{2k+1} / (k! (2k+1))`
/// with `t = (x − μ) / (√2 σ)`.
pub fn normal_to_uniform(mu: f64, sigma: f64, x: f64, terms: usize) -> Result<f64> {
    check_sigma(sigma)?;
    let t = (x - mu) / (SQRT_2 * sigma);
    let t2 = t * t;
    let mut p = t;
    let mut sum = p;
    for k in 1..=terms {
        p *= -t2 / k as f64;
        sum += p / (2 * k + 1) as f64;
    }
    Ok(0.5 + sum / PI.sqrt())
}

fn standard_table() -> &'static Cdf1D {
    static TABLE: OnceLock<Cdf1D> = OnceLock::new();
    TABLE.get_or_init(|| Cdf1D::new(Normal1d::new(0.0, 1.0).expect("valid normal")))
}

/// Series on the central range, tabulated standard-normal CDF in the tails.
pub fn uniform_to_normal_routed(mu: f64, sigma: f64, z: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::DomainError(format!("z = {z} is outside (0, 1)")));
    }
    if (U2N_CENTRAL.0..=U2N_CENTRAL.1).contains(&z) {
        uniform_to_normal(mu, sigma, z, DEFAULT_U2N_TERMS)
    } else {
        let q = if z < 0.5 {
            standard_table().quantile(z)?
        } else {
            standard_table().quantile_upper(1.0 - z)?
        };
        Ok(mu + sigma * q)
    }
}

/// Series within `3σ` of the mean, tabulated CDF beyond.
pub fn normal_to_uniform_routed(mu: f64, sigma: f64, x: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let t = (x - mu) / sigma;
    if t.abs() <= N2U_CENTRAL_SIGMAS {
        normal_to_uniform(mu, sigma, x, DEFAULT_N2U_TERMS)
    } else {
        Ok(standard_table().cdf(t))
    }
}
