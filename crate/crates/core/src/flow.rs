//! Stacked SOS flow in the normalizing direction `x → z`.
//!
//! A model standardizes its input, then runs `L` blocks. Block `b` visits the
//! coordinates in `ordering[0], ordering[1], …` and replaces coordinate
//! `ordering[i]` by an SOS polynomial of itself whose coefficients come from the
//! coordinates visited before it. The log-density of `x` is the source
//! log-density of `z` plus the accumulated log-derivatives.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioner::{ForwardCache, MaskedNet};
use crate::error::{Error, Result};
use crate::sospoly::{self, EPS_DER};

/// Tolerance on `|T(z) - x|` used when sampling.
pub const SAMPLE_TOL: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    StandardNormal,
    /// Uniform on the unit cube `[0, 1]^d`.
    Uniform,
}

impl Source {
    pub fn log_density(self, z: &[f64]) -> Result<f64> {
        match self {
            Source::StandardNormal => {
                let sq: f64 = z.iter().map(|v| v * v).sum();
                Ok(-0.5 * sq - 0.5 * z.len() as f64 * LN_2PI)
            }
            Source::Uniform => {
                if z.iter().all(|v| (0.0..=1.0).contains(v)) {
                    Ok(0.0)
                } else {
                    Err(Error::DomainError(format!(
                        "point {z:?} lies outside the unit cube of the uniform source"
                    )))
                }
            }
        }
    }

    /// `n × d` source draws. Row `i` consumes the generator stream in order.
    pub fn draw(self, n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| match self {
            Source::StandardNormal => rng.sample(StandardNormal),
            Source::Uniform => rng.random::<f64>(),
        })
    }
}

/// Per-dimension affine standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    /// Column means and (population) standard deviations.
    pub fn fit(data: &Array2<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::InvalidData("need at least two rows to standardize".into()));
        }
        let mean = data.mean_axis(Axis(0)).expect("nonempty").to_vec();
        let std = data.std_axis(Axis(0), 0.0).to_vec();
        if let Some(j) = std.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidData(format!("column {j} has zero or non-finite spread")));
        }
        Ok(Self { mean, std })
    }

    pub fn log_det(&self) -> f64 {
        -self.std.iter().map(|s| s.ln()).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowBlock {
    pub(crate) net: MaskedNet,
    pub(crate) ordering: Vec<usize>,
}

/// Per-sample record of a block pass, kept for backpropagation.
pub(crate) struct BlockTrace {
    /// Block input in visiting order.
    pub(crate) input: Vec<f64>,
    pub(crate) net: ForwardCache,
    pub(crate) deriv: Vec<f64>,
    b: Vec<f64>,
}

impl BlockTrace {
    pub(crate) fn new(block: &FlowBlock) -> Self {
        let d = block.net.d();
        Self {
            input: vec![0.0; d],
            net: ForwardCache::new(&block.net),
            deriv: vec![0.0; d],
            b: vec![0.0; 2 * block.net.r() + 1],
        }
    }
}

impl FlowBlock {
    pub fn new(net: MaskedNet, ordering: Vec<usize>) -> Result<Self> {
        let d = net.d();
        let mut seen = vec![false; d];
        if ordering.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: ordering.len(),
            });
        }
        for &o in &ordering {
            if o >= d || std::mem::replace(&mut seen[o], true) {
                return Err(Error::InvalidConfig(format!("{ordering:?} is not a permutation")));
            }
        }
        Ok(Self { net, ordering })
    }

    pub fn net(&self) -> &MaskedNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut MaskedNet {
        &mut self.net
    }

    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    /// Maps `x` to `out` (both in original coordinates) and returns the
    /// block's log-determinant.
    pub fn forward(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let mut trace = BlockTrace::new(self);
        self.forward_traced(x, out, &mut trace)
    }

    pub(crate) fn forward_traced(&self, x: &[f64], out: &mut [f64], trace: &mut BlockTrace) -> f64 {
        for (p, &o) in trace.input.iter_mut().zip(&self.ordering) {
            *p = x[o];
        }
        self.net.forward_cached(&trace.input, &mut trace.net);
        let (k, r) = (self.net.k(), self.net.r());
        let n_a = k * (r + 1);
        let raw = trace.net.output();
        let mut logdet = 0.0;
        for (i, block) in raw.chunks_exact(n_a + 1).enumerate() {
            let (a, c) = (&block[..n_a], block[n_a]);
            let u = trace.input[i];
            sospoly::expand_into(k, r, a, &mut trace.b);
            out[self.ordering[i]] = sospoly::eval_expanded(&trace.b, c, u);
            let der = sospoly::deriv_raw(r, a, u);
            trace.deriv[i] = der;
            logdet += der.max(EPS_DER).ln();
        }
        logdet
    }

    /// Inverts the block: recovers the input from `y`, one coordinate at a
    /// time in visiting order.
    pub fn inverse(&self, y: &[f64], tol: f64) -> Result<Vec<f64>> {
        let d = self.net.d();
        let per = self.net.out_per_dim();
        let mut visited = vec![0.0; d];
        let mut out = vec![0.0; d];
        for i in 0..d {
            // Coefficients for position i ignore positions >= i, so the
            // not-yet-recovered entries can hold anything.
            let raw = self.net.forward_raw(&visited)?;
            let coeffs = self.net.coeffs_from_block(&raw[i * per..(i + 1) * per]);
            let u = sospoly::invert(&coeffs, y[self.ordering[i]], tol)?;
            visited[i] = u;
            out[self.ordering[i]] = u;
        }
        Ok(out)
    }
}

/// Architecture of a stacked flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowShape {
    pub blocks: usize,
    pub k: usize,
    pub r: usize,
    pub hidden_sizes: Vec<usize>,
    /// Each block visits coordinates in the reverse order of the previous one.
    pub alternate_orderings: bool,
}

impl Default for FlowShape {
    fn default() -> Self {
        Self {
            blocks: 8,
            k: 5,
            r: 4,
            hidden_sizes: vec![100, 100],
            alternate_orderings: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    pub(crate) d: usize,
    pub(crate) blocks: Vec<FlowBlock>,
    pub(crate) standardizer: Standardizer,
    pub(crate) source: Source,
}

impl FlowModel {
    /// Identity-initialized model with a unit standardizer and normal source.
    pub fn new(d: usize, shape: &FlowShape, seed: u64) -> Result<Self> {
        if shape.blocks == 0 {
            return Err(Error::InvalidConfig("a flow needs at least one block".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ordering: Vec<usize> = (0..d).collect();
        let mut blocks = Vec::with_capacity(shape.blocks);
        for b in 0..shape.blocks {
            if b > 0 && shape.alternate_orderings {
                ordering.reverse();
            }
            let net = MaskedNet::build(d, &shape.hidden_sizes, shape.k, shape.r, rng.random())?;
            blocks.push(FlowBlock::new(net, ordering.clone())?);
        }
        Ok(Self {
            d,
            blocks,
            standardizer: Standardizer::identity(d),
            source: Source::StandardNormal,
        })
    }

    pub fn from_parts(blocks: Vec<FlowBlock>, standardizer: Standardizer, source: Source) -> Result<Self> {
        let d = blocks
            .first()
            .ok_or_else(|| Error::InvalidConfig("a flow needs at least one block".into()))?
            .net
            .d();
        if let Some(b) = blocks.iter().find(|b| b.net.d() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: b.net.d(),
            });
        }
        if standardizer.mean.len() != d || standardizer.std.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: standardizer.mean.len(),
            });
        }
        Ok(Self {
            d,
            blocks,
            standardizer,
            source,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn blocks(&self) -> &[FlowBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [FlowBlock] {
        &mut self.blocks
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn set_standardizer(&mut self, s: Standardizer) -> Result<()> {
        if s.mean.len() != self.d || s.std.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: s.mean.len(),
            });
        }
        self.standardizer = s;
        Ok(())
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn set_source(&mut self, source: Source) {
        self.source = source;
    }

    pub fn shape(&self) -> FlowShape {
        let net = &self.blocks[0].net;
        let alternate = self.blocks.len() > 1 && self.d > 1 && self.blocks[1].ordering != self.blocks[0].ordering;
        FlowShape {
            blocks: self.blocks.len(),
            k: net.k(),
            r: net.r(),
            hidden_sizes: net.hidden_sizes().to_vec(),
            alternate_orderings: alternate,
        }
    }

    pub fn param_len(&self) -> usize {
        self.blocks.iter().map(|b| b.net.param_len()).sum()
    }

    /// All conditioner parameters, block by block in declaration order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        for b in &self.blocks {
            b.net.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_len() {
            return Err(Error::DimensionMismatch {
                expected: self.param_len(),
                got: params.len(),
            });
        }
        let mut rest = params;
        for b in &mut self.blocks {
            rest = b.net.read_params(rest)?;
        }
        Ok(())
    }

    pub(crate) fn param_slices_mut(&mut self) -> impl Iterator<Item = (&mut [f64], Option<&[bool]>)> {
        self.blocks.iter_mut().flat_map(|b| b.net.param_slices_mut())
    }

    /// Adds uniform `±scale` noise to every unmasked parameter of every block.
    pub fn perturb(&mut self, scale: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in &mut self.blocks {
            b.net.perturb(scale, rng.random());
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("input {x:?}")));
        }
        Ok(())
    }

    /// Maps data `x` to the source space, returning `(z, log|det ∂z/∂x|)`.
    pub fn normalize(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_input(x)?;
        let s = &self.standardizer;
        let mut cur: Vec<f64> = x
            .iter()
            .zip(s.mean.iter().zip(&s.std))
            .map(|(v, (m, sd))| (v - m) / sd)
            .collect();
        let mut next = vec![0.0; self.d];
        let mut logdet = s.log_det();
        for (bi, block) in self.blocks.iter().enumerate() {
            logdet += block.forward(&cur, &mut next);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("output of block {bi}: {next:?}")));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        if !logdet.is_finite() {
            return Err(Error::NonFinite("log-determinant".into()));
        }
        Ok((cur, logdet))
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        let (z, logdet) = self.normalize(x)?;
        Ok(self.source.log_density(&z)? + logdet)
    }

    /// Row-wise log-density, evaluated in parallel.
    pub fn log_prob_batch(&self, data: &Array2<f64>) -> Result<Array1<f64>> {
        let rows: Vec<ArrayView1<f64>> = data.outer_iter().collect();
        let out: Result<Vec<f64>> = rows
            .par_iter()
            .map(|row| self.log_prob(&row.to_vec()))
            .collect();
        Ok(Array1::from(out?))
    }

    /// Generative direction: maps a source point back to data space.
    pub fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: z.len(),
            });
        }
        let mut cur = z.to_vec();
        for block in self.blocks.iter().rev() {
            cur = block.inverse(&cur, SAMPLE_TOL)?;
        }
        let s = &self.standardizer;
        Ok(cur
            .iter()
            .zip(s.mean.iter().zip(&s.std))
            .map(|(u, (m, sd))| u * sd + m)
            .collect())
    }

    /// Maps every row of `z` through [`inverse`](Self::inverse), in parallel.
    pub fn inverse_batch(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        let rows: Vec<Vec<f64>> = z.outer_iter().map(|r| r.to_vec()).collect();
        let mapped: Result<Vec<Vec<f64>>> = rows.par_iter().map(|r| self.inverse(r)).collect();
        let flat: Vec<f64> = mapped?.into_iter().flatten().collect();
        Ok(Array2::from_shape_vec((z.nrows(), self.d), flat).expect("rows have length d"))
    }

    /// Draws `n` samples: source draws (see [`Source::draw`]) pushed through
    /// the inverse map.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Array2<f64>> {
        if n == 0 {
            return Err(Error::InvalidConfig("sample count must be at least 1".into()));
        }
        self.inverse_batch(&self.source.draw(n, self.d, seed))
    }
}

/// Effective per-conditional parameter counts: `(L k (r+1), k ((2r+1)^L - 1) / 2)`.
///
/// The first is what `L` stacked blocks use; the second is what a single
/// block of the same composite degree would need.
pub fn param_count(blocks: usize, k: usize, r: usize) -> Result<(u128, u128)> {
    if blocks == 0 || k == 0 {
        return Err(Error::InvalidConfig("blocks and k must be at least 1".into()));
    }
    let (l, k, r) = (blocks as u128, k as u128, r as u128);
    let stacked = l
        .checked_mul(k)
        .and_then(|v| v.checked_mul(r + 1))
        .ok_or(Error::Overflow("stacked parameter count"))?;
    let exp = u32::try_from(blocks).map_err(|_| Error::Overflow("(2r+1)^L"))?;
    let wide = (2 * r + 1)
        .checked_pow(exp)
        .and_then(|p| k.checked_mul(p - 1))
        .ok_or(Error::Overflow("(2r+1)^L"))?
        / 2;
    Ok((stacked, wide))
}
