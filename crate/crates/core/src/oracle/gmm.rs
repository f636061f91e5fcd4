//! One-dimensional Gaussian mixtures and the shape of the increasing map that
//! pushes a standard normal onto them.
//!
//! The slope of `T = G⁻¹ ∘ Φ` is `T'(z) = φ(z) / q(T(z))`. Between well
//! separated components `q` nearly vanishes and the slope blows up, so `T`
//! looks piecewise linear with one near-vertical jump per gap. Far out in
//! either tail only the extreme component matters and the slope tends to its
//! standard deviation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::cdf::{kr_map_1d, Cdf1D, Density1d, Normal1d};
use crate::error::{Error, Result};
use crate::special::{normal_cdf, normal_ln_pdf, normal_sf};

/// Jump threshold as a multiple of the median slope.
pub const DEFAULT_JUMP_FACTOR: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gmm1D {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    /// Component standard deviations.
    pub stds: Vec<f64>,
}

impl Gmm1D {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        let g = Self { weights, means, stds };
        g.validate()?;
        Ok(g)
    }

    /// Equal-weight mixture with the given means and variances.
    pub fn equal_weights(means: &[f64], variances: &[f64]) -> Result<Self> {
        let w = 1.0 / means.len() as f64;
        Self::new(
            vec![w; means.len()],
            means.to_vec(),
            variances.iter().map(|v| v.sqrt()).collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.weights.len();
        if n == 0 || self.means.len() != n || self.stds.len() != n {
            return Err(Error::DomainError("mixture needs matching, nonempty weights/means/stds".into()));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::DomainError("mixture weights must be nonnegative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::DomainError(format!("mixture weights sum to {total}, not 1")));
        }
        if self.stds.iter().any(|&s| !(s > 0.0 && s.is_finite())) || self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::DomainError("component parameters must be finite with σ > 0".into()));
        }
        Ok(())
    }

    fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((&w, &m), &s)| (w, m, s))
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .components()
            .map(|(w, m, s)| w.ln() + normal_ln_pdf((x - m) / s) - s.ln())
            .collect();
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }

    pub fn mean(&self) -> f64 {
        self.components().map(|(w, m, _)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.components().map(|(w, m, s)| w * (s * s + (m - mu) * (m - mu))).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                idx = i;
                break;
            }
        }
        let e: f64 = rng.sample(StandardNormal);
        self.means[idx] + self.stds[idx] * e
    }

    /// Mixture whose outermost component (by mean) on the given side.
    fn extreme_std(&self, upper: bool) -> f64 {
        let pick = self
            .components()
            .filter(|c| c.0 > 0.0)
            .max_by(|a, b| {
                let (x, y) = if upper { (a.1, b.1) } else { (b.1, a.1) };
                x.total_cmp(&y)
            })
            .expect("nonempty mixture");
        pick.2
    }
}

impl Density1d for Gmm1D {
    fn pdf(&self, x: f64) -> f64 {
        self.components()
            .map(|(w, m, s)| w * (normal_ln_pdf((x - m) / s)).exp() / s)
            .sum()
    }

    fn cdf(&self, x: f64) -> Option<f64> {
        Some(self.components().map(|(w, m, s)| w * normal_cdf((x - m) / s)).sum())
    }

    fn sf(&self, x: f64) -> Option<f64> {
        Some(self.components().map(|(w, m, s)| w * normal_sf((x - m) / s)).sum())
    }

    fn support(&self) -> (f64, f64) {
        let smax = self.stds.iter().cloned().fold(0.0, f64::max);
        let lo = self.means.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo - 8.0 * smax, hi + 8.0 * smax)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmMapAnalysis {
    pub grid: Vec<f64>,
    /// `T(z)` at each grid point.
    pub values: Vec<f64>,
    /// `T'(z) = φ(z) / q(T(z))` at each grid point.
    pub slopes: Vec<f64>,
    pub threshold: f64,
    /// Maximal runs `[z_first, z_last]` of grid points whose slope exceeds the threshold.
    pub jump_intervals: Vec<(f64, f64)>,
    /// Slopes at the first and last grid point.
    pub end_slopes: (f64, f64),
    /// Limits of the slope as `z → −∞` and `z → +∞`: the standard deviations
    /// of the extreme components.
    pub asymptotic_slopes: (f64, f64),
}

/// Evaluates the standard-normal-to-mixture map on `grid` (sorted ascending)
/// and locates its jumps using the default 50× median-slope threshold.
pub fn analyze_gmm_map(target: &Gmm1D, grid: &[f64]) -> Result<GmmMapAnalysis> {
    analyze_gmm_map_with(target, grid, DEFAULT_JUMP_FACTOR)
}

pub fn analyze_gmm_map_with(target: &Gmm1D, grid: &[f64], jump_factor: f64) -> Result<GmmMapAnalysis> {
    target.validate()?;
    if grid.is_empty() {
        return Err(Error::InvalidConfig("analysis grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidConfig("analysis grid must be strictly increasing".into()));
    }
    let source = Cdf1D::new(Normal1d::new(0.0, 1.0)?);
    let tcdf = Cdf1D::new(target.clone());
    let mut values = Vec::with_capacity(grid.len());
    let mut slopes = Vec::with_capacity(grid.len());
    for &z in grid {
        let x = kr_map_1d(&source, &tcdf, z)?;
        values.push(x);
        // Ratio in log space: both densities can underflow far in the tails.
        slopes.push((normal_ln_pdf(z) - target.ln_pdf(x)).exp());
    }

    let mut sorted = slopes.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let threshold = jump_factor * median;

    let mut jump_intervals = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &s) in slopes.iter().enumerate() {
        match (s > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(a)) => {
                jump_intervals.push((grid[a], grid[i - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        jump_intervals.push((grid[a], grid[grid.len() - 1]));
    }

    Ok(GmmMapAnalysis {
        grid: grid.to_vec(),
        end_slopes: (slopes[0], slopes[slopes.len() - 1]),
        asymptotic_slopes: (target.extreme_std(false), target.extreme_std(true)),
        values,
        slopes,
        threshold,
        jump_intervals,
    })
}
