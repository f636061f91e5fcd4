//! Synthetic datasets, CSV ingestion and seeded splits.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::oracle::Gmm1D;
use crate::special::{gauss_legendre, normal_ln_pdf};

/// Names accepted by [`gen`].
pub const GENERATORS: [&str; 8] = [
    "gmm3",
    "gmm5",
    "banana_sq",
    "banana_cube",
    "funnel",
    "square",
    "mog_grid",
    "rings",
];

const RING_RADII: [f64; 2] = [1.0, 3.0];
const RING_NOISE: f64 = 0.1;
const GRID_CENTER: f64 = 2.0;
const GRID_STD: f64 = 0.4;
const SQUARE_HALF_WIDTH: f64 = 2.0;

/// Three equal-weight unit-variance components at −5, 0, 5.
pub fn gmm3() -> Gmm1D {
    Gmm1D::equal_weights(&[-5.0, 0.0, 5.0], &[1.0, 1.0, 1.0]).expect("valid mixture")
}

/// Five equal-weight components at −5, −2, 0, 2, 5 with variances 1.5, 2, 1, 2, 1.
pub fn gmm5() -> Gmm1D {
    Gmm1D::equal_weights(&[-5.0, -2.0, 0.0, 2.0, 5.0], &[1.5, 2.0, 1.0, 2.0, 1.0]).expect("valid mixture")
}

/// Log-density of a generator's distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum TrueDensity {
    Mixture(Gmm1D),
    /// `x₂ ~ N(0, 4)`, `x₁ | x₂ ~ N(x₂²/4, 1)`.
    BananaSq,
    /// `x₂ ~ N(2, 2)`, `x₁ | x₂ ~ N(x₂³/3, 1.5)`.
    BananaCube,
    /// `x₁ ~ N(0, 1)`, `x₂ | x₁ ~ N(0, exp(x₁))`.
    Funnel,
    /// Uniform on `[−2, 2]²`.
    Square,
    /// Equal mixture of isotropic Gaussians at `(±2, ±2)` with σ = 0.4.
    MogGrid,
    /// Equal mixture of two rings; the radial profile is normalized by quadrature.
    Rings { log_norm: f64 },
}

/// `ln N(x; mean, variance)`.
fn ln_normal(x: f64, mean: f64, variance: f64) -> f64 {
    let sd = variance.sqrt();
    normal_ln_pdf((x - mean) / sd) - sd.ln()
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Radial profile `Σ_j ½ N(ρ; R_j, σ²)` before truncation to `ρ > 0`.
fn ring_radial(rho: f64) -> f64 {
    RING_RADII
        .iter()
        .map(|&r| 0.5 * ln_normal(rho, r, RING_NOISE * RING_NOISE).exp())
        .sum()
}

fn ring_log_norm() -> f64 {
    let (nodes, weights) = gauss_legendre(16);
    let hi = RING_RADII[1] + 12.0 * RING_NOISE;
    let panels = 400;
    let h = hi / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (t, w) in nodes.iter().zip(&weights) {
            total += 0.5 * h * w * ring_radial(mid + 0.5 * h * t);
        }
    }
    total.ln()
}

impl TrueDensity {
    pub fn dim(&self) -> usize {
        match self {
            TrueDensity::Mixture(_) => 1,
            _ => 2,
        }
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(match self {
            TrueDensity::Mixture(g) => g.ln_pdf(x[0]),
            TrueDensity::BananaSq => ln_normal(x[1], 0.0, 4.0) + ln_normal(x[0], 0.25 * x[1] * x[1], 1.0),
            TrueDensity::BananaCube => ln_normal(x[1], 2.0, 2.0) + ln_normal(x[0], x[1].powi(3) / 3.0, 1.5),
            TrueDensity::Funnel => ln_normal(x[0], 0.0, 1.0) + ln_normal(x[1], 0.0, x[0].exp()),
            TrueDensity::Square => {
                if x.iter().all(|v| v.abs() <= SQUARE_HALF_WIDTH) {
                    -(4.0 * SQUARE_HALF_WIDTH * SQUARE_HALF_WIDTH).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            TrueDensity::MogGrid => {
                let v = GRID_STD * GRID_STD;
                let terms: Vec<f64> = grid_centers()
                    .iter()
                    .map(|&(a, b)| 0.25f64.ln() + ln_normal(x[0], a, v) + ln_normal(x[1], b, v))
                    .collect();
                log_sum_exp(&terms)
            }
            TrueDensity::Rings { log_norm } => {
                let rho = x[0].hypot(x[1]);
                if rho == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    ring_radial(rho).ln() - log_norm - (2.0 * PI * rho).ln()
                }
            }
        })
    }
}

fn grid_centers() -> [(f64, f64); 4] {
    let c = GRID_CENTER;
    [(-c, -c), (-c, c), (c, -c), (c, c)]
}

/// An `n × d` sample with an optional exact log-density.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Array2<f64>,
    pub name: String,
    pub true_density: Option<TrueDensity>,
}

impl Dataset {
    pub fn new(rows: Array2<f64>, name: impl Into<String>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::EmptyData);
        }
        if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos / rows.ncols(), pos % rows.ncols());
            return Err(Error::InvalidData(format!("non-finite value at row {r}, column {c}")));
        }
        Ok(Self {
            rows,
            name: name.into(),
            true_density: None,
        })
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn d(&self) -> usize {
        self.rows.ncols()
    }

    /// Exact log-density at `x`, when known.
    pub fn true_log_pdf(&self, x: &[f64]) -> Option<Result<f64>> {
        self.true_density.as_ref().map(|t| t.log_pdf(x))
    }

    /// Mean negative log-likelihood of `rows` under the true density.
    pub fn true_nll(&self, rows: &Array2<f64>) -> Option<Result<f64>> {
        let t = self.true_density.as_ref()?;
        let mut sum = 0.0;
        for row in rows.rows() {
            match t.log_pdf(row.as_slice().expect("standard layout")) {
                Ok(v) => sum -= v,
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok(sum / rows.nrows() as f64))
    }

    fn subset(&self, idx: &[usize], suffix: &str) -> Dataset {
        Dataset {
            rows: self.rows.select(Axis(0), idx),
            name: format!("{}/{suffix}", self.name),
            true_density: self.true_density.clone(),
        }
    }

    /// Writes the rows with an `x1,x2,…` header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = (1..=self.d()).map(|j| format!("x{j}")).collect();
        let to_err = |e: csv::Error| Error::InvalidData(format!("csv write: {e}"));
        w.write_record(&header).map_err(to_err)?;
        for row in self.rows.rows() {
            w.write_record(row.iter().map(|v| format!("{v:?}"))).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::InvalidData(format!("csv write: {e}")))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

/// Draws `n` rows from a named generator.
pub fn gen(name: &str, n: usize, seed: u64) -> Result<Dataset> {
    if !GENERATORS.contains(&name) {
        return Err(Error::UnknownDataset(name.to_string()));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("dataset size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let (density, d) = match name {
        "gmm3" => (TrueDensity::Mixture(gmm3()), 1),
        "gmm5" => (TrueDensity::Mixture(gmm5()), 1),
        "banana_sq" => (TrueDensity::BananaSq, 2),
        "banana_cube" => (TrueDensity::BananaCube, 2),
        "funnel" => (TrueDensity::Funnel, 2),
        "square" => (TrueDensity::Square, 2),
        "mog_grid" => (TrueDensity::MogGrid, 2),
        _ => (
            TrueDensity::Rings {
                log_norm: ring_log_norm(),
            },
            2,
        ),
    };

    let mut rows = Array2::zeros((n, d));
    for mut row in rows.rows_mut() {
        match &density {
            TrueDensity::Mixture(g) => row[0] = g.sample(&mut rng),
            TrueDensity::BananaSq => {
                let x2 = 2.0 * std_normal(&mut rng);
                row[1] = x2;
                row[0] = 0.25 * x2 * x2 + std_normal(&mut rng);
            }
            TrueDensity::BananaCube => {
                let x2 = 2.0 + 2f64.sqrt() * std_normal(&mut rng);
                row[1] = x2;
                row[0] = x2.powi(3) / 3.0 + 1.5f64.sqrt() * std_normal(&mut rng);
            }
            TrueDensity::Funnel => {
                let x1 = std_normal(&mut rng);
                row[0] = x1;
                row[1] = (0.5 * x1).exp() * std_normal(&mut rng);
            }
            TrueDensity::Square => {
                row[0] = rng.random_range(-SQUARE_HALF_WIDTH..SQUARE_HALF_WIDTH);
                row[1] = rng.random_range(-SQUARE_HALF_WIDTH..SQUARE_HALF_WIDTH);
            }
            TrueDensity::MogGrid => {
                let (a, b) = grid_centers()[rng.random_range(0..4)];
                row[0] = a + GRID_STD * std_normal(&mut rng);
                row[1] = b + GRID_STD * std_normal(&mut rng);
            }
            TrueDensity::Rings { .. } => {
                let radius = RING_RADII[rng.random_range(0..2)];
                let noise = Normal::new(radius, RING_NOISE).expect("valid normal");
                let rho = loop {
                    let r = noise.sample(&mut rng);
                    if r > 0.0 {
                        break r;
                    }
                };
                let theta = rng.random_range(0.0..2.0 * PI);
                row[0] = rho * theta.cos();
                row[1] = rho * theta.sin();
            }
        }
    }
    Ok(Dataset {
        rows,
        name: name.to_string(),
        true_density: Some(density),
    })
}

/// Outcome of [`load_csv`] besides the data itself.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoadReport {
    pub header: Option<Vec<String>>,
    /// 1-based line numbers of rows dropped for holding NaN or infinity.
    pub rejected_lines: Vec<usize>,
}

/// Reads a rectangular numeric CSV. The first row is treated as a header when
/// any of its cells is not a number.
pub fn load_csv(path: impl AsRef<Path>, delimiter: u8) -> Result<(Dataset, LoadReport)> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    parse_csv(text.as_bytes(), delimiter, name)
}

/// [`load_csv`] over any reader.
pub fn parse_csv<R: Read>(input: R, delimiter: u8, name: impl Into<String>) -> Result<(Dataset, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut report = LoadReport::default();
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0;
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row: line,
            col: 0,
            message: e.to_string(),
        })?;
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
        if i == 0 && parsed.iter().any(|p| p.is_err()) {
            report.header = Some(record.iter().map(str::to_string).collect());
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse {
                row: line,
                col: record.len().min(w) + 1,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        let mut row = Vec::with_capacity(w);
        for (j, p) in parsed.into_iter().enumerate() {
            match p {
                Ok(v) => row.push(v),
                Err(e) => {
                    return Err(Error::Parse {
                        row: line,
                        col: j + 1,
                        message: format!("'{}': {e}", &record[j]),
                    })
                }
            }
        }
        if row.iter().all(|v| v.is_finite()) {
            values.extend(row);
            n += 1;
        } else {
            report.rejected_lines.push(line);
        }
    }
    let d = width.unwrap_or(0);
    if n == 0 || d == 0 {
        return Err(Error::EmptyData);
    }
    let rows = Array2::from_shape_vec((n, d), values).expect("rectangular rows");
    Ok((Dataset::new(rows, name)?, report))
}

/// Seeded shuffle followed by contiguous train/validation/test blocks of
/// `⌊f·n⌋` rows each.
pub fn split(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(*f > 0.0 && f.is_finite())) {
        return Err(Error::InvalidFractions(format!("fractions must be positive, got {fractions:?}")));
    }
    if a + b + c > 1.0 + 1e-12 {
        return Err(Error::InvalidFractions(format!("fractions sum to {} > 1", a + b + c)));
    }
    let n = ds.n();
    let count = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
    let (na, nb, nc) = (count(a), count(b), count(c));
    if na == 0 || nb == 0 || nc == 0 {
        return Err(Error::InvalidFractions(format!("{n} rows leave an empty part with {fractions:?}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((
        ds.subset(&idx[..na], "train"),
        ds.subset(&idx[na..na + nb], "val"),
        ds.subset(&idx[na + nb..na + nb + nc], "test"),
    ))
}
