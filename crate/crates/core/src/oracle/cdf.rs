//! Tabulated distribution functions and the 1D increasing transport map
//! `T = G⁻¹ ∘ F`.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::special::{gauss_legendre, normal_cdf, normal_ln_pdf, normal_sf};

/// Grid size used by [`Cdf1D::new`].
pub const DEFAULT_GRID: usize = 4096;

const SOLVE_MAX_ITER: usize = 200;

/// A univariate density. Exact distribution functions are optional; without
/// them [`Cdf1D`] integrates the pdf on its grid.
pub trait Density1d: Debug + Send + Sync {
    fn pdf(&self, x: f64) -> f64;

    fn cdf(&self, _x: f64) -> Option<f64> {
        None
    }

    fn sf(&self, _x: f64) -> Option<f64> {
        None
    }

    /// Interval to tabulate over. Holds essentially all the mass.
    fn support(&self) -> (f64, f64);

    /// Whether the density vanishes outside [`support`](Self::support).
    fn is_bounded(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normal1d {
    pub mean: f64,
    pub std: f64,
}

impl Normal1d {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
            return Err(Error::DomainError(format!("invalid normal N({mean}, {std}²)")));
        }
        Ok(Self { mean, std })
    }
}

impl Density1d for Normal1d {
    fn pdf(&self, x: f64) -> f64 {
        (normal_ln_pdf((x - self.mean) / self.std)).exp() / self.std
    }

    fn cdf(&self, x: f64) -> Option<f64> {
        Some(normal_cdf((x - self.mean) / self.std))
    }

    fn sf(&self, x: f64) -> Option<f64> {
        Some(normal_sf((x - self.mean) / self.std))
    }

    fn support(&self) -> (f64, f64) {
        (self.mean - 8.0 * self.std, self.mean + 8.0 * self.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform1d {
    pub lo: f64,
    pub hi: f64,
}

impl Uniform1d {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::DomainError(format!("invalid uniform on [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }
}

impl Density1d for Uniform1d {
    fn pdf(&self, x: f64) -> f64 {
        if (self.lo..=self.hi).contains(&x) {
            1.0 / (self.hi - self.lo)
        } else {
            0.0
        }
    }

    fn cdf(&self, x: f64) -> Option<f64> {
        Some(((x - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0))
    }

    fn sf(&self, x: f64) -> Option<f64> {
        Some(((self.hi - x) / (self.hi - self.lo)).clamp(0.0, 1.0))
    }

    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn is_bounded(&self) -> bool {
        true
    }
}

/// CDF of a 1D density tabulated on a uniform grid, with a monotone cubic
/// Hermite interpolant (node slopes are the pdf, limited Fritsch–Carlson style).
#[derive(Debug, Clone)]
pub struct Cdf1D {
    density: Arc<dyn Density1d>,
    grid: Vec<f64>,
    cdf_values: Vec<f64>,
    slopes: Vec<f64>,
    exact: bool,
}

impl Cdf1D {
    pub fn new(density: impl Density1d + 'static) -> Self {
        Self::with_grid(Arc::new(density), DEFAULT_GRID)
    }

    pub fn with_grid(density: Arc<dyn Density1d>, n: usize) -> Self {
        let n = n.max(2);
        let (lo, hi) = density.support();
        let h = (hi - lo) / (n - 1) as f64;
        let grid: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
        let exact = density.cdf(lo).is_some();

        let mut cdf_values = Vec::with_capacity(n);
        // pdf rescaling so slopes agree with the normalized table.
        let mut scale = 1.0;
        if exact {
            cdf_values.extend(grid.iter().map(|&x| density.cdf(x).expect("exact cdf")));
        } else {
            let (nodes, weights) = gauss_legendre(8);
            let mut acc = 0.0;
            cdf_values.push(0.0);
            for w in grid.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                let cell: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(t, wt)| wt * density.pdf(mid + 0.5 * h * t))
                    .sum();
                acc += 0.5 * h * cell;
                cdf_values.push(acc);
            }
            cdf_values.iter_mut().for_each(|v| *v /= acc);
            scale = 1.0 / acc;
        }
        // Rounding in an exact cdf can produce tiny decreases.
        for i in 1..n {
            if cdf_values[i] < cdf_values[i - 1] {
                cdf_values[i] = cdf_values[i - 1];
            }
        }

        let mut slopes: Vec<f64> = grid.iter().map(|&x| density.pdf(x) * scale).collect();
        for i in 0..n - 1 {
            let delta = (cdf_values[i + 1] - cdf_values[i]) / h;
            if delta == 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
                continue;
            }
            let (a, b) = (slopes[i] / delta, slopes[i + 1] / delta);
            let norm = a * a + b * b;
            if norm > 9.0 {
                let t = 3.0 / norm.sqrt();
                slopes[i] = t * a * delta;
                slopes[i + 1] = t * b * delta;
            }
        }

        Self {
            density,
            grid,
            cdf_values,
            slopes,
            exact,
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf_values
    }

    pub fn density(&self) -> &dyn Density1d {
        self.density.as_ref()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.density.pdf(x)
    }

    fn interpolate(&self, x: f64) -> f64 {
        let (lo, hi) = (self.grid[0], *self.grid.last().expect("grid"));
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let h = self.grid[1] - self.grid[0];
        let i = (((x - lo) / h) as usize).min(self.grid.len() - 2);
        let t = (x - self.grid[i]) / h;
        let (y0, y1) = (self.cdf_values[i], self.cdf_values[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if self.exact {
            self.density.cdf(x).expect("exact cdf")
        } else {
            self.interpolate(x)
        }
    }

    /// `1 − F(x)`, tail-accurate when the density supplies it.
    pub fn sf(&self, x: f64) -> f64 {
        match self.density.sf(x) {
            Some(s) if self.exact => s,
            _ => 1.0 - self.cdf(x),
        }
    }

    /// Generalized inverse `inf{t : F(t) ≥ u}`, solved in log space for
    /// accuracy in the lower tail.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::DomainError(format!("quantile level {u} is outside (0, 1)")));
        }
        if u > 0.5 {
            return self.quantile_upper(1.0 - u);
        }
        let i = self.cdf_values.partition_point(|&v| v < u);
        let (mut lo, mut hi) = if i == 0 {
            if !self.exact || self.density.is_bounded() {
                return Ok(self.grid[0]);
            }
            self.expand_down(u)?
        } else if i == self.grid.len() {
            (self.grid[i - 1], self.grid[i - 1])
        } else {
            (self.grid[i - 1], self.grid[i])
        };
        if lo == hi {
            return Ok(lo);
        }
        let target = u.ln();
        solve_increasing(
            |x| {
                let f = self.cdf(x);
                (f.ln() - target, self.pdf(x) / f)
            },
            &mut lo,
            &mut hi,
        )
    }

    /// Solves `1 − F(x) = s` for small `s` without forming `1 − s`.
    pub fn quantile_upper(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::DomainError(format!("tail level {s} is outside (0, 1)")));
        }
        if s > 0.5 {
            return self.quantile(1.0 - s);
        }
        let n = self.grid.len();
        // First grid point whose survival is <= s (survival decreases along the grid).
        let (mut a, mut b) = (0, n);
        while a < b {
            let m = (a + b) / 2;
            if self.sf(self.grid[m]) <= s {
                b = m;
            } else {
                a = m + 1;
            }
        }
        let (mut lo, mut hi) = match a {
            0 => return Ok(self.grid[0]),
            j if j < n => (self.grid[j - 1], self.grid[j]),
            _ => {
                if !self.exact || self.density.is_bounded() {
                    return Ok(self.grid[n - 1]);
                }
                self.expand_up(s)?
            }
        };
        let target = s.ln();
        // ln S is decreasing; solve its negation.
        solve_increasing(
            |x| {
                let sv = self.sf(x);
                (target - sv.ln(), self.pdf(x) / sv)
            },
            &mut lo,
            &mut hi,
        )
    }

    fn expand_down(&self, u: f64) -> Result<(f64, f64)> {
        let width = self.grid[self.grid.len() - 1] - self.grid[0];
        let hi = self.grid[0];
        let mut step = width;
        for _ in 0..64 {
            let lo = hi - step;
            if self.cdf(lo) < u {
                return Ok((lo, hi));
            }
            step *= 2.0;
        }
        Err(Error::DomainError(format!("quantile level {u} is beyond the representable tail")))
    }

    fn expand_up(&self, s: f64) -> Result<(f64, f64)> {
        let width = self.grid[self.grid.len() - 1] - self.grid[0];
        let lo = self.grid[self.grid.len() - 1];
        let mut step = width;
        for _ in 0..64 {
            let hi = lo + step;
            if self.sf(hi) < s {
                return Ok((lo, hi));
            }
            step *= 2.0;
        }
        Err(Error::DomainError(format!("tail level {s} is beyond the representable tail")))
    }
}

/// Root of an increasing function on `[lo, hi]` by Newton steps that fall
/// back to bisection when they leave the bracket. `f` returns the value and
/// derivative.
fn solve_increasing<F: Fn(f64) -> (f64, f64)>(f: F, lo: &mut f64, hi: &mut f64) -> Result<f64> {
    let mut x = 0.5 * (*lo + *hi);
    for _ in 0..SOLVE_MAX_ITER {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            *lo = x;
        } else {
            *hi = x;
        }
        let mid = 0.5 * (*lo + *hi);
        if mid <= *lo || mid >= *hi || (*hi - *lo) <= 1e-15 * x.abs().max(1e-300) {
            return Ok(mid);
        }
        let newton = x - fx / dfx;
        if fx.is_finite() && dfx > 0.0 && newton > *lo && newton < *hi {
            if (newton - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
                return Ok(newton);
            }
            x = newton;
        } else {
            x = mid;
        }
    }
    Err(Error::NoConvergence {
        iterations: SOLVE_MAX_ITER,
    })
}

/// The increasing map pushing `source` onto `target`: `G⁻¹(F(z))`, evaluated
/// through whichever tail keeps the probability level accurate.
pub fn kr_map_1d(source: &Cdf1D, target: &Cdf1D, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::DomainError(format!("z = {z}")));
    }
    let (lo, hi) = source.density().support();
    if source.density().is_bounded() && !(lo..=hi).contains(&z) {
        return Err(Error::DomainError(format!("z = {z} is outside the source support [{lo}, {hi}]")));
    }
    let u = source.cdf(z);
    if u <= 0.5 {
        if u <= 0.0 {
            return Err(Error::DomainError(format!("F({z}) underflows to 0")));
        }
        target.quantile(u)
    } else {
        let s = source.sf(z);
        if s <= 0.0 {
            return Err(Error::DomainError(format!("1 - F({z}) underflows to 0")));
        }
        target.quantile_upper(s)
    }
}
