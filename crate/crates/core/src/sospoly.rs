//! Univariate increasing polynomials written as a constant plus the integral
//! of a sum of squared polynomials:
//!
//! ```text
//! T(z) = c + ∫₀^z Σ_κ ( Σ_l a[κ][l] u^l )² du
//! ```
//!
//! With `k` squared terms of degree `r` the map has degree `2r + 1`. The
//! integrand is nonnegative for any real coefficients, so every coefficient
//! set gives a nondecreasing map and no constraint is needed during training.

use crate::error::{Error, Result};

/// Floor applied inside `log(T'(z))` so a collapsed derivative stays finite.
pub const EPS_DER: f64 = 1e-12;

/// Default iteration budget for [`invert`].
pub const DEFAULT_MAX_ITER: usize = 200;

/// Width below which inversion switches from bisection to safeguarded Newton.
const NEWTON_SWITCH_WIDTH: f64 = 1e-3;

/// Coefficients of one SOS transform: `k` polynomials of degree `r` plus an offset.
///
/// `a` is stored polynomial-major: `a[κ * (r + 1) + l]` multiplies `u^l` in the
/// κ-th squared polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct SosCoeffs {
    k: usize,
    r: usize,
    a: Vec<f64>,
    c: f64,
}

impl SosCoeffs {
    pub fn new(k: usize, r: usize, a: Vec<f64>, c: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if a.len() != k * (r + 1) {
            return Err(Error::DimensionMismatch {
                expected: k * (r + 1),
                got: a.len(),
            });
        }
        Ok(Self { k, r, a, c })
    }

    /// Builds coefficients from one row per squared polynomial, each row
    /// listing `[a_0, a_1, …, a_r]`.
    pub fn from_rows(rows: &[Vec<f64>], c: f64) -> Result<Self> {
        let k = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if width == 0 {
            return Err(Error::InvalidConfig("empty coefficient rows".into()));
        }
        if let Some(bad) = rows.iter().find(|row| row.len() != width) {
            return Err(Error::DimensionMismatch {
                expected: width,
                got: bad.len(),
            });
        }
        Self::new(k, width - 1, rows.concat(), c)
    }

    /// The identity map: `a_{0,κ} = 1/√k`, everything else zero.
    pub fn identity(k: usize, r: usize) -> Self {
        let mut a = vec![0.0; k * (r + 1)];
        let lead = 1.0 / (k as f64).sqrt();
        for kappa in 0..k {
            a[kappa * (r + 1)] = lead;
        }
        Self { k, r, a, c: 0.0 }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Coefficients of the κ-th squared polynomial.
    pub fn poly(&self, kappa: usize) -> &[f64] {
        &self.a[kappa * (self.r + 1)..(kappa + 1) * (self.r + 1)]
    }

    pub fn is_constant(&self) -> bool {
        self.a.iter().all(|&v| v == 0.0)
    }

    pub fn expand(&self) -> MonoPoly {
        expand(self)
    }

    pub fn deriv(&self, z: f64) -> f64 {
        deriv(self, z)
    }

    /// `log(max(T'(z), EPS_DER))`.
    pub fn log_deriv(&self, z: f64) -> f64 {
        deriv(self, z).max(EPS_DER).ln()
    }
}

/// Expanded form `T(z) = c + Σ_m b[m] z^{m+1} / (m + 1)` for `m = 0..=2r`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonoPoly {
    b: Vec<f64>,
    c: f64,
}

impl MonoPoly {
    /// Coefficients of the derivative polynomial `T'(z) = Σ_m b[m] z^m`.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Degree of `T` (always odd, `2r + 1`, unless the map is constant).
    pub fn degree(&self) -> usize {
        self.b.len()
    }

    pub fn eval(&self, z: f64) -> f64 {
        eval(self, z)
    }

    /// Plain power-basis coefficients of `T`, constant term first.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.b.len() + 1);
        out.push(self.c);
        out.extend(self.b.iter().enumerate().map(|(m, b)| b / (m + 1) as f64));
        out
    }
}

/// Closed-form integration: `b_m` is the sum over κ of the self-convolution of
/// the κ-th coefficient vector.
pub fn expand(coeffs: &SosCoeffs) -> MonoPoly {
    let mut b = vec![0.0; 2 * coeffs.r + 1];
    expand_into(coeffs.k, coeffs.r, &coeffs.a, &mut b);
    MonoPoly { b, c: coeffs.c }
}

/// Horner evaluation of the antiderivative.
///
/// Uses compensated Horner (error-free products via `mul_add`), so the result
/// is about as accurate as if computed in twice the working precision. This
/// matters where `T'` is tiny and one ulp of `T` spans a long stretch of `z`.
pub fn eval(poly: &MonoPoly, z: f64) -> f64 {
    let n = poly.b.len();
    let coef = |i: usize| if i == 0 { poly.c } else { poly.b[i - 1] / i as f64 };
    let mut s = coef(n);
    let mut err = 0.0;
    for i in (0..n).rev() {
        let p = s * z;
        let pi = s.mul_add(z, -p);
        let a = coef(i);
        let t = p + a;
        let bb = t - p;
        let sigma = (p - (t - bb)) + (a - bb);
        s = t;
        err = err * z + (pi + sigma);
    }
    // Past overflow the error terms are inf - inf.
    if s.is_finite() { s + err } else { s }
}

/// `T'(z)` evaluated as a sum of squares from the raw coefficients, so the
/// result is nonnegative in floating point.
pub fn deriv(coeffs: &SosCoeffs, z: f64) -> f64 {
    deriv_raw(coeffs.r, &coeffs.a, z)
}

pub(crate) fn horner(p: &[f64], z: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &v| acc * z + v)
}

/// Allocation-free expansion for the training path: writes `b` (length
/// `2r + 1`) from polynomial-major coefficients `a`.
pub(crate) fn expand_into(k: usize, r: usize, a: &[f64], b: &mut [f64]) {
    b.iter_mut().for_each(|v| *v = 0.0);
    for p in a.chunks_exact(r + 1).take(k) {
        for (l1, &x) in p.iter().enumerate() {
            for (l2, &y) in p.iter().enumerate() {
                b[l1 + l2] += x * y;
            }
        }
    }
}

/// Horner evaluation of `c + Σ_m b[m] z^{m+1}/(m+1)` from a raw `b` slice.
pub(crate) fn eval_expanded(b: &[f64], c: f64, z: f64) -> f64 {
    let mut acc = 0.0;
    for (m, &bm) in b.iter().enumerate().rev() {
        acc = acc * z + bm / (m + 1) as f64;
    }
    c + acc * z
}

pub(crate) fn deriv_raw(r: usize, a: &[f64], z: f64) -> f64 {
    a.chunks_exact(r + 1)
        .map(|p| {
            let q = horner(p, z);
            q * q
        })
        .sum()
}

/// Solves `T(z) = x` with the default iteration budget.
pub fn invert(coeffs: &SosCoeffs, x: f64, tol: f64) -> Result<f64> {
    invert_with(coeffs, &coeffs.expand(), x, tol, DEFAULT_MAX_ITER)
}

/// Solves `T(z) = x` for an increasing SOS map.
///
/// The root is bracketed by doubling outward from `[-1, 1]`, narrowed by
/// bisection to width `1e-3`, then polished with Newton steps that fall back
/// to bisection whenever they leave the bracket. Convergence means
/// `|T(z) - x| <= tol`, or the bracket has collapsed to adjacent floats.
pub fn invert_with(
    coeffs: &SosCoeffs,
    poly: &MonoPoly,
    x: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    if coeffs.is_constant() {
        return Err(Error::NotInvertible);
    }
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("inversion target {x}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }

    let residual = |z: f64| eval(poly, z) - x;

    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    let (mut f_lo, mut f_hi) = (residual(lo), residual(hi));
    // 2^1100 overflows, so this loop always terminates.
    while f_hi < 0.0 {
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NoConvergence { iterations: 0 });
        }
        f_hi = residual(hi);
    }
    while f_lo > 0.0 {
        hi = lo;
        f_hi = f_lo;
        lo *= 2.0;
        if !lo.is_finite() {
            return Err(Error::NoConvergence { iterations: 0 });
        }
        f_lo = residual(lo);
    }
    if f_lo.abs() <= tol {
        return Ok(lo);
    }
    if f_hi.abs() <= tol {
        return Ok(hi);
    }

    let mut z = 0.5 * (lo + hi);
    for _ in 0..max_iter {
        let f = residual(z);
        if f.abs() <= tol {
            return Ok(z);
        }
        if f < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Bracket is down to adjacent floats.
            return Ok(if residual(lo).abs() <= residual(hi).abs() { lo } else { hi });
        }
        z = if hi - lo > NEWTON_SWITCH_WIDTH {
            mid
        } else {
            let slope = deriv(coeffs, z);
            let step = z - f / slope;
            if slope > 0.0 && step > lo && step < hi {
                if (step - z).abs() <= 2.0 * f64::EPSILON * z.abs() {
                    // Newton has stalled at the resolution of f64.
                    return Ok(step);
                }
                step
            } else {
                mid
            }
        };
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
    })
}
