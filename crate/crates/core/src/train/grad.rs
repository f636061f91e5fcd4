//! Hand-derived backpropagation of the negative log-likelihood.
//!
//! Per sample and block, with `u` the block input at a visited position,
//! `q_κ = Σ_l a[κ][l] u^l` and `D = Σ_κ q_κ²`:
//!
//! ```text
//! ∂T/∂c        = 1
//! ∂T/∂a[κ][l]  = 2 Σ_l' a[κ][l'] u^(l+l'+1) / (l+l'+1)
//! ∂T/∂u        = D
//! ∂log D/∂a    = 2 q_κ u^l / D
//! ∂log D/∂u    = 2 Σ_κ q_κ q'_κ / D
//! ```
//!
//! Coefficient gradients then flow back through the masked network, whose
//! input gradient joins the direct `∂/∂u` terms.

use ndarray::Array2;
use rayon::prelude::*;

use crate::conditioner::BackwardScratch;
use crate::error::{Error, Result};
use crate::flow::{BlockTrace, FlowModel, Source};
use crate::sospoly::{horner, EPS_DER};

/// Rows per shard. Fixed so the reduction order does not depend on the
/// number of worker threads.
const SHARD_ROWS: usize = 64;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Gradient of the loss with respect to every conditioner parameter, laid out
/// like [`FlowModel::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradTape {
    grad: Vec<f64>,
}

impl GradTape {
    pub fn zeros(len: usize) -> Self {
        Self { grad: vec![0.0; len] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.grad
    }

    pub fn len(&self) -> usize {
        self.grad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grad.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.grad.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    /// Clamps every entry to `[-limit, limit]`.
    pub fn clip(&mut self, limit: f64) {
        self.grad.iter_mut().for_each(|g| *g = g.clamp(-limit, limit));
    }
}

struct Workspace {
    traces: Vec<BlockTrace>,
    /// Input of every block in original coordinates, plus the final output.
    states: Vec<Vec<f64>>,
    d_out: Vec<f64>,
    d_direct: Vec<f64>,
    d_cond: Vec<f64>,
    g_cur: Vec<f64>,
    g_prev: Vec<f64>,
    powers: Vec<f64>,
    q: Vec<f64>,
    scratch: BackwardScratch,
    offsets: Vec<usize>,
}

impl Workspace {
    fn new(model: &FlowModel) -> Self {
        let d = model.d();
        let first = model.blocks()[0].net();
        let mut offsets = Vec::with_capacity(model.blocks().len());
        let mut acc = 0;
        for b in model.blocks() {
            offsets.push(acc);
            acc += b.net().param_len();
        }
        Self {
            traces: model.blocks().iter().map(BlockTrace::new).collect(),
            states: vec![vec![0.0; d]; model.blocks().len() + 1],
            d_out: vec![0.0; d * first.out_per_dim()],
            d_direct: vec![0.0; d],
            d_cond: vec![0.0; d],
            g_cur: vec![0.0; d],
            g_prev: vec![0.0; d],
            powers: vec![0.0; 2 * first.r() + 2],
            q: vec![0.0; first.k()],
            scratch: BackwardScratch::default(),
            offsets,
        }
    }
}

/// Mean negative log-likelihood of `batch` and its exact gradient.
pub fn nll_and_grad(model: &FlowModel, batch: &Array2<f64>) -> Result<(f64, GradTape)> {
    if model.source() != Source::StandardNormal {
        return Err(Error::InvalidConfig("gradients are only available for the standard normal source".into()));
    }
    if batch.ncols() != model.d() {
        return Err(Error::DimensionMismatch {
            expected: model.d(),
            got: batch.ncols(),
        });
    }
    let n = batch.nrows();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let rows: Vec<&[f64]> = batch
        .as_slice()
        .map(|flat| flat.chunks_exact(model.d()).collect())
        .ok_or_else(|| Error::InvalidData("batch must be in standard row-major layout".into()))?;

    let shards: Vec<Result<(f64, Vec<f64>)>> = rows
        .par_chunks(SHARD_ROWS)
        .map(|shard| {
            let mut ws = Workspace::new(model);
            let mut grad = vec![0.0; model.param_len()];
            let mut loss = 0.0;
            for row in shard {
                loss += sample_loss_grad(model, row, &mut grad, &mut ws)?;
            }
            Ok((loss, grad))
        })
        .collect();

    let mut total = 0.0;
    let mut grad = vec![0.0; model.param_len()];
    for shard in shards {
        let (l, g) = shard?;
        total += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let scale = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    let nll = total * scale;
    if !nll.is_finite() {
        return Err(Error::NonFinite(format!("batch loss {nll}")));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i}")));
    }
    Ok((nll, GradTape { grad }))
}

/// Adds the gradient of one sample's loss into `grad` and returns the loss.
fn sample_loss_grad(model: &FlowModel, x: &[f64], grad: &mut [f64], ws: &mut Workspace) -> Result<f64> {
    let s = model.standardizer();
    for (j, v) in ws.states[0].iter_mut().enumerate() {
        *v = (x[j] - s.mean[j]) / s.std[j];
    }
    let mut logdet = s.log_det();
    for (b, block) in model.blocks().iter().enumerate() {
        let (done, rest) = ws.states.split_at_mut(b + 1);
        logdet += block.forward_traced(&done[b], &mut rest[0], &mut ws.traces[b]);
    }
    let z = ws.states.last().expect("final state");
    let d = model.d();
    let loss = 0.5 * z.iter().map(|v| v * v).sum::<f64>() + d as f64 * HALF_LN_2PI - logdet;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss at {x:?}")));
    }

    ws.g_cur.copy_from_slice(z);
    for (b, block) in model.blocks().iter().enumerate().rev() {
        let net = block.net();
        let (k, r) = (net.k(), net.r());
        let width = r + 1;
        let per = net.out_per_dim();
        let trace = &ws.traces[b];
        let raw = trace.net.output();
        for i in 0..d {
            let u = trace.input[i];
            let a = &raw[i * per..i * per + k * width];
            let g_t = ws.g_cur[block.ordering()[i]];
            let der = trace.deriv[i];
            // Matches the max(D, EPS_DER) floor in the forward pass.
            let g_log = if der > EPS_DER { -1.0 / der } else { 0.0 };

            ws.powers[0] = 1.0;
            for p in 1..ws.powers.len() {
                ws.powers[p] = ws.powers[p - 1] * u;
            }
            let mut dq_sum = 0.0;
            for (kappa, poly) in a.chunks_exact(width).enumerate() {
                let q = horner(poly, u);
                ws.q[kappa] = q;
                let dq: f64 = (1..width).map(|l| l as f64 * poly[l] * ws.powers[l - 1]).sum();
                dq_sum += q * dq;
            }
            let out = &mut ws.d_out[i * per..(i + 1) * per];
            for (kappa, poly) in a.chunks_exact(width).enumerate() {
                for l in 0..width {
                    let integral: f64 = (0..width)
                        .map(|l2| poly[l2] * ws.powers[l + l2 + 1] / (l + l2 + 1) as f64)
                        .sum();
                    out[kappa * width + l] = g_t * 2.0 * integral + g_log * 2.0 * ws.q[kappa] * ws.powers[l];
                }
            }
            out[k * width] = g_t;
            ws.d_direct[i] = g_t * der + g_log * 2.0 * dq_sum;
        }

        let off = ws.offsets[b];
        net.backward(
            &trace.input,
            &trace.net,
            &ws.d_out,
            &mut grad[off..off + net.param_len()],
            &mut ws.d_cond,
            &mut ws.scratch,
        );
        for (i, &o) in block.ordering().iter().enumerate() {
            ws.g_prev[o] = ws.d_direct[i] + ws.d_cond[i];
        }
        std::mem::swap(&mut ws.g_cur, &mut ws.g_prev);
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowShape, Standardizer};
    use crate::Source;

    fn model(d: usize, blocks: usize, k: usize, r: usize, seed: u64) -> FlowModel {
        let shape = FlowShape {
            blocks,
            k,
            r,
            hidden_sizes: vec![5, 4],
            alternate_orderings: true,
        };
        let mut m = FlowModel::new(d, &shape, seed).unwrap();
        m.perturb(0.3, seed + 100);
        m.set_standardizer(Standardizer {
            mean: vec![0.1; d],
            std: vec![1.3; d],
        })
        .unwrap();
        m
    }

    fn fd_check(m: &FlowModel, batch: &Array2<f64>) {
        let (_, tape) = nll_and_grad(m, batch).unwrap();
        let base = m.params();
        let h = 1e-4;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] = base[i] + h;
            let mut mp = m.clone();
            mp.set_params(&p).unwrap();
            let up = nll_and_grad(&mp, batch).unwrap().0;
            p[i] = base[i] - h;
            mp.set_params(&p).unwrap();
            let down = nll_and_grad(&mp, batch).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            let g = tape.as_slice()[i];
            let diff = (g - fd).abs();
            assert!(
                diff <= 1e-7 || diff / g.abs().max(fd.abs()) <= 1e-4,
                "param {i}: analytic {g} vs fd {fd}"
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = model(2, 2, 2, 2, 3);
        let batch = Source::StandardNormal.draw(7, 2, 4);
        fd_check(&m, &batch);
    }

    #[test]
    fn gradient_single_dimension() {
        let m = model(1, 3, 3, 1, 8);
        let batch = Source::StandardNormal.draw(5, 1, 1);
        fd_check(&m, &batch);
    }

    #[test]
    fn masked_weights_get_zero_gradient() {
        let m = model(3, 2, 2, 1, 1);
        let batch = Source::StandardNormal.draw(30, 3, 2);
        let (_, tape) = nll_and_grad(&m, &batch).unwrap();
        let mut offset = 0;
        for block in m.blocks() {
            for layer in block.net().layers() {
                for (i, &on) in layer.mask().iter().enumerate() {
                    if !on {
                        assert_eq!(tape.as_slice()[offset + i], 0.0);
                    }
                }
                offset += layer.param_len();
            }
        }
    }

    #[test]
    fn loss_matches_log_prob() {
        let m = model(2, 2, 2, 2, 5);
        let batch = Source::StandardNormal.draw(100, 2, 6);
        let (nll, _) = nll_and_grad(&m, &batch).unwrap();
        let lp = m.log_prob_batch(&batch).unwrap();
        assert!((nll + lp.mean().unwrap()).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_batches() {
        let m = model(2, 1, 1, 0, 0);
        assert!(matches!(
            nll_and_grad(&m, &Array2::zeros((3, 3))),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(nll_and_grad(&m, &Array2::zeros((0, 2))), Err(Error::EmptyData)));
    }
}
