//! Masked autoregressive conditioner network.
//!
//! Each unit carries a degree in `1..=d`. Input `i` (0-based) has degree
//! `i + 1`; hidden units cycle through `1..d`; every output belonging to
//! dimension `j` has degree `j + 1`. A hidden connection exists iff
//! `deg_out >= deg_in` and an output connection iff `deg_out > deg_in`, so the
//! coefficients for dimension `j` only see inputs `0..j`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sospoly::SosCoeffs;

/// One masked affine layer. Weights are `n_out × n_in` row-major and are kept
/// zero wherever the mask is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedLayer {
    pub(crate) n_in: usize,
    pub(crate) n_out: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) biases: Vec<f64>,
    pub(crate) mask: Vec<bool>,
}

impl MaskedLayer {
    fn new(in_degrees: &[usize], out_degrees: &[usize], strict: bool) -> Self {
        let (n_in, n_out) = (in_degrees.len(), out_degrees.len());
        let mut mask = Vec::with_capacity(n_in * n_out);
        for &dout in out_degrees {
            for &din in in_degrees {
                mask.push(if strict { dout > din } else { dout >= din });
            }
        }
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
            mask,
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.n_in + inp]
    }

    pub(crate) fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.n_in).zip(&self.biases))
        {
            *o = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    /// Number of parameters (weights then biases).
    pub fn param_len(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedNet {
    d: usize,
    k: usize,
    r: usize,
    hidden_sizes: Vec<usize>,
    layers: Vec<MaskedLayer>,
}

/// Per-dimension SOS coefficients produced by one conditioner pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CondOutput {
    pub coeffs: Vec<SosCoeffs>,
}

/// Degree of hidden unit `h` when the input dimension is `d`.
fn hidden_degree(h: usize, d: usize) -> usize {
    if d <= 1 {
        1
    } else {
        h % (d - 1) + 1
    }
}

impl MaskedNet {
    /// Builds a net whose outputs start at the identity-map coefficients.
    ///
    /// Hidden weights are drawn uniformly from `±1/√fan_in` with the seeded
    /// generator; output weights start at zero.
    pub fn build(d: usize, hidden_sizes: &[usize], k: usize, r: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidConfig("input dimension must be at least 1".into()));
        }
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if hidden_sizes.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer sizes must be at least 1".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_dim = k * (r + 1) + 1;
        let input_deg: Vec<usize> = (1..=d).collect();
        let output_deg: Vec<usize> = (1..=d).flat_map(|j| std::iter::repeat_n(j, per_dim)).collect();

        let mut layers = Vec::with_capacity(hidden_sizes.len() + 1);
        let mut prev = input_deg;
        for &width in hidden_sizes {
            let deg: Vec<usize> = (0..width).map(|h| hidden_degree(h, d)).collect();
            let mut layer = MaskedLayer::new(&prev, &deg, false);
            let bound = 1.0 / (layer.n_in as f64).sqrt();
            for (w, &m) in layer.weights.iter_mut().zip(&layer.mask) {
                let v = rng.random_range(-bound..bound);
                if m {
                    *w = v;
                }
            }
            layers.push(layer);
            prev = deg;
        }
        let mut out = MaskedLayer::new(&prev, &output_deg, true);
        let lead = 1.0 / (k as f64).sqrt();
        for j in 0..d {
            for kappa in 0..k {
                out.biases[j * per_dim + kappa * (r + 1)] = lead;
            }
        }
        layers.push(out);

        Ok(Self {
            d,
            k,
            r,
            hidden_sizes: hidden_sizes.to_vec(),
            layers,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.hidden_sizes
    }

    pub fn layers(&self) -> &[MaskedLayer] {
        &self.layers
    }

    /// Outputs per dimension: `k (r + 1)` polynomial coefficients and the offset.
    pub fn out_per_dim(&self) -> usize {
        self.k * (self.r + 1) + 1
    }

    pub fn param_len(&self) -> usize {
        self.layers.iter().map(MaskedLayer::param_len).sum()
    }

    /// Copies parameters into `out` in declaration order (per layer: weights, biases).
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
    }

    /// Reads parameters from the front of `src`, returning the remainder.
    /// Masked-out weights are forced back to zero.
    pub fn read_params<'a>(&mut self, mut src: &'a [f64]) -> Result<&'a [f64]> {
        if src.len() < self.param_len() {
            return Err(Error::DimensionMismatch {
                expected: self.param_len(),
                got: src.len(),
            });
        }
        for layer in &mut self.layers {
            let (w, rest) = src.split_at(layer.weights.len());
            for ((dst, &v), &m) in layer.weights.iter_mut().zip(w).zip(&layer.mask) {
                *dst = if m { v } else { 0.0 };
            }
            let (b, rest) = rest.split_at(layer.biases.len());
            layer.biases.copy_from_slice(b);
            src = rest;
        }
        Ok(src)
    }

    /// Mutable parameter slices in declaration order.
    pub(crate) fn param_slices_mut(&mut self) -> impl Iterator<Item = (&mut [f64], Option<&[bool]>)> {
        self.layers.iter_mut().flat_map(|layer| {
            [
                (layer.weights.as_mut_slice(), Some(layer.mask.as_slice())),
                (layer.biases.as_mut_slice(), None),
            ]
        })
    }

    /// Adds uniform noise in `±scale` to every unmasked parameter.
    pub fn perturb(&mut self, scale: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (slice, mask) in self.param_slices_mut() {
            for (i, v) in slice.iter_mut().enumerate() {
                let noise = rng.random_range(-scale..=scale);
                if mask.is_none_or(|m| m[i]) {
                    *v += noise;
                }
            }
        }
    }

    /// Raw output vector, `d · out_per_dim` long.
    pub fn forward_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        let mut cache = ForwardCache::new(self);
        self.forward_cached(x, &mut cache);
        Ok(cache.activations.pop().unwrap_or_default())
    }

    pub fn forward(&self, x: &[f64]) -> Result<CondOutput> {
        let raw = self.forward_raw(x)?;
        let coeffs = raw
            .chunks_exact(self.out_per_dim())
            .map(|block| self.coeffs_from_block(block))
            .collect();
        Ok(CondOutput { coeffs })
    }

    pub(crate) fn coeffs_from_block(&self, block: &[f64]) -> SosCoeffs {
        let n = self.k * (self.r + 1);
        SosCoeffs::new(self.k, self.r, block[..n].to_vec(), block[n])
            .expect("block length matches net shape")
    }

    /// Runs the net, keeping every layer's output in `cache`. Hidden layers are
    /// tanh, the output layer is linear.
    pub(crate) fn forward_cached(&self, x: &[f64], cache: &mut ForwardCache) {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = cache.activations.split_at_mut(i);
            let input = if i == 0 { x } else { &done[i - 1] };
            let out = &mut rest[0];
            layer.apply(input, out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
    }

    /// Backpropagates `d_out` (gradient w.r.t. the raw output) through the net,
    /// accumulating parameter gradients into `grad` (same layout as
    /// [`write_params`](Self::write_params)) and returning the gradient w.r.t.
    /// the input in `d_input`.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        cache: &ForwardCache,
        d_out: &[f64],
        grad: &mut [f64],
        d_input: &mut [f64],
        scratch: &mut BackwardScratch,
    ) {
        let offsets = self.layer_offsets();
        let n_layers = self.layers.len();
        scratch.delta.clear();
        scratch.delta.extend_from_slice(d_out);
        for i in (0..n_layers).rev() {
            let layer = &self.layers[i];
            let input: &[f64] = if i == 0 { x } else { &cache.activations[i - 1] };
            let off = offsets[i];
            let (gw, gb) = grad[off..off + layer.param_len()].split_at_mut(layer.weights.len());
            for (o, &dv) in scratch.delta.iter().enumerate() {
                gb[o] += dv;
                if dv == 0.0 {
                    continue;
                }
                let row = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                let mrow = &layer.mask[o * layer.n_in..(o + 1) * layer.n_in];
                for ((g, &m), &inp) in row.iter_mut().zip(mrow).zip(input) {
                    if m {
                        *g += dv * inp;
                    }
                }
            }
            scratch.next.clear();
            scratch.next.resize(layer.n_in, 0.0);
            for (o, &dv) in scratch.delta.iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                for (n, &w) in scratch.next.iter_mut().zip(row) {
                    *n += dv * w;
                }
            }
            if i > 0 {
                // tanh'(a) = 1 - tanh(a)^2
                for (n, &h) in scratch.next.iter_mut().zip(input) {
                    *n *= 1.0 - h * h;
                }
            }
            std::mem::swap(&mut scratch.delta, &mut scratch.next);
        }
        d_input.copy_from_slice(&scratch.delta);
    }

    fn layer_offsets(&self) -> Vec<usize> {
        self.layers
            .iter()
            .scan(0, |acc, l| {
                let start = *acc;
                *acc += l.param_len();
                Some(start)
            })
            .collect()
    }
}

pub(crate) struct ForwardCache {
    pub(crate) activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub(crate) fn new(net: &MaskedNet) -> Self {
        Self {
            activations: net.layers.iter().map(|l| vec![0.0; l.n_out]).collect(),
        }
    }

    pub(crate) fn output(&self) -> &[f64] {
        self.activations.last().expect("net has an output layer")
    }
}

#[derive(Default)]
pub(crate) struct BackwardScratch {
    delta: Vec<f64>,
    next: Vec<f64>,
}
