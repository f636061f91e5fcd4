//! Maximum-likelihood training of SOS flows.

mod checkpoint;
mod grad;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowModel, FlowShape, Standardizer};

pub use checkpoint::{load, load_bytes, save, to_bytes, FORMAT_VERSION, MAGIC};
pub use grad::{nll_and_grad, GradTape};

/// ∞-norm limit applied when `clip_grad` is enabled.
pub const CLIP_LIMIT: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Training hyperparameters. Defaults follow the published real-data setup:
/// batch 1000, learning rate 1e-3, 8 blocks, k = 5, r = 4, 40 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub blocks: usize,
    pub k: usize,
    pub r: usize,
    pub hidden_sizes: Vec<usize>,
    pub seed: u64,
    pub val_fraction: f64,
    pub optimizer: OptimizerKind,
    pub clip_grad: bool,
    pub alternate_orderings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1000,
            learning_rate: 1e-3,
            epochs: 40,
            blocks: 8,
            k: 5,
            r: 4,
            hidden_sizes: vec![100, 100],
            seed: 0,
            val_fraction: 0.1,
            optimizer: OptimizerKind::Adam,
            clip_grad: false,
            alternate_orderings: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        if self.blocks == 0 || self.k == 0 {
            return bad("blocks and k must be at least 1");
        }
        if self.hidden_sizes.contains(&0) {
            return bad("hidden layer sizes must be at least 1");
        }
        Ok(())
    }

    pub fn shape(&self) -> FlowShape {
        FlowShape {
            blocks: self.blocks,
            k: self.k,
            r: self.r,
            hidden_sizes: self.hidden_sizes.clone(),
            alternate_orderings: self.alternate_orderings,
        }
    }
}

/// Adam with the usual defaults (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, model: &mut FlowModel, grad: &GradTape) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let g = grad.as_slice();
        let mut i = 0;
        for (slice, _) in model.param_slices_mut() {
            for p in slice.iter_mut() {
                let gi = g[i];
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * gi;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = self.m[i] / bc1;
                let v_hat = self.v[i] / bc2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
                i += 1;
            }
        }
    }
}

fn sgd_step(model: &mut FlowModel, grad: &GradTape, lr: f64) {
    let g = grad.as_slice();
    let mut i = 0;
    for (slice, _) in model.param_slices_mut() {
        for p in slice.iter_mut() {
            *p -= lr * g[i];
            i += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_nll: f64,
    /// `None` when training without a validation split.
    pub val_nll: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: FlowModel,
    pub history: Vec<EpochMetrics>,
    /// Epoch whose parameters were returned (0 means the initial model).
    pub best_epoch: usize,
}

/// Mean negative log-likelihood; `+∞` if any row fails to evaluate.
pub fn mean_nll(model: &FlowModel, data: &Array2<f64>) -> f64 {
    match model.log_prob_batch(data) {
        Ok(lp) => -lp.mean().unwrap_or(f64::NAN),
        Err(_) => f64::INFINITY,
    }
}

pub fn fit(data: &Array2<f64>, config: &TrainConfig) -> Result<FlowModel> {
    fit_with_history(data, config).map(|o| o.model)
}

/// Trains a fresh model on `data`.
///
/// A seeded shuffle splits off `val_fraction` of the rows for model
/// selection; the standardizer is fitted on the remaining training rows.
/// Every epoch reshuffles the training rows and takes one optimizer step per
/// minibatch. The returned model carries the parameters with the lowest
/// validation NLL seen at the end of an epoch (or the final parameters when
/// there is no validation split).
pub fn fit_with_history(data: &Array2<f64>, config: &TrainConfig) -> Result<FitOutcome> {
    config.validate()?;
    if data.nrows() < 2 {
        return Err(Error::InvalidData(format!("need at least 2 rows, got {}", data.nrows())));
    }
    if data.ncols() == 0 {
        return Err(Error::InvalidData("rows have no columns".into()));
    }
    if let Some((i, _)) = data
        .outer_iter()
        .enumerate()
        .find(|(_, row)| row.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::InvalidData(format!("row {i} contains a non-finite value")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    order.shuffle(&mut rng);
    let n_val = if config.val_fraction > 0.0 {
        ((config.val_fraction * data.nrows() as f64).floor() as usize).max(1)
    } else {
        0
    };
    if data.nrows() - n_val < 2 {
        return Err(Error::InvalidData("validation split leaves fewer than 2 training rows".into()));
    }
    let val = data.select(Axis(0), &order[..n_val]);
    let train = data.select(Axis(0), &order[n_val..]);

    let mut model = FlowModel::new(data.ncols(), &config.shape(), config.seed)?;
    model.set_standardizer(Standardizer::fit(&train)?)?;

    let mut adam = Adam::new(model.param_len(), config.learning_rate);
    let mut best = (f64::INFINITY, model.params(), 0);
    if n_val > 0 {
        best.0 = mean_nll(&model, &val);
    }
    let mut history = Vec::with_capacity(config.epochs);
    let mut idx: Vec<usize> = (0..train.nrows()).collect();

    for epoch in 1..=config.epochs {
        idx.shuffle(&mut rng);
        for chunk in idx.chunks(config.batch_size) {
            let batch = train.select(Axis(0), chunk);
            let (_, mut grad) = nll_and_grad(&model, &batch)?;
            if config.clip_grad {
                grad.clip(CLIP_LIMIT);
            }
            match config.optimizer {
                OptimizerKind::Adam => adam.step(&mut model, &grad),
                OptimizerKind::Sgd => sgd_step(&mut model, &grad, config.learning_rate),
            }
        }
        let train_nll = mean_nll(&model, &train);
        let val_nll = (n_val > 0).then(|| mean_nll(&model, &val));
        if let Some(v) = val_nll {
            if v < best.0 {
                best = (v, model.params(), epoch);
            }
        }
        history.push(EpochMetrics {
            epoch,
            train_nll,
            val_nll,
        });
    }

    let best_epoch = if n_val > 0 {
        model.set_params(&best.1)?;
        best.2
    } else {
        config.epochs
    };
    Ok(FitOutcome {
        model,
        history,
        best_epoch,
    })
}
