use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use super::layers::{bce_with_logit, sigmoid};
use super::model::{ModelConfig, Network};
use super::tensor::{Params, Tensor};
use crate::error::{Error, Result};
use crate::featurize::{ScaledGrid, Scaler};

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_FORMAT: &str = "tweetmatrix-model";
const ADAM_EPS: f64 = 1e-8;

/// One training example: one scaled matrix for the CNN, three (oldest first)
/// for the CNN-LSTM.
#[derive(Debug, Clone)]
pub struct Example {
    pub xs: Vec<ScaledGrid>,
    pub y: u8,
}

impl Example {
    fn slices(&self) -> Vec<&[f64]> {
        self.xs.iter().map(|g| g.grid().data.as_slice()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean batch objective seen during the epoch.
    pub train_loss: f64,
    /// Accuracy of the in-epoch forward passes.
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probability: f64,
    pub label: u8,
}

/// Label 1 at or above one half.
pub fn label_for(probability: f64) -> u8 {
    u8::from(probability >= 0.5)
}

/// Keeps probabilities strictly inside (0, 1) even when the logit saturates
/// the sigmoid in floating point.
fn open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network,
    pub scaler: Scaler,
    pub history: Vec<EpochStats>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn config(&self) -> &ModelConfig {
        &self.network.config
    }

    fn check(&self, xs: &[ScaledGrid]) -> Result<()> {
        let fp = self.scaler.fingerprint();
        if xs.iter().any(|g| g.fingerprint() != fp) {
            return Err(Error::ScalerMismatch);
        }
        Ok(())
    }

    pub fn predict(&self, xs: &[ScaledGrid]) -> Result<Prediction> {
        self.check(xs)?;
        let slices: Vec<&[f64]> = xs.iter().map(|g| g.grid().data.as_slice()).collect();
        let probability = open_unit(self.network.probability(&slices)?);
        Ok(Prediction {
            probability,
            label: label_for(probability),
        })
    }

    pub fn predict_batch(&self, examples: &[Example]) -> Result<Vec<Prediction>> {
        examples.iter().map(|e| self.predict(&e.xs)).collect()
    }

    /// Fraction of correct labels, in [0, 1].
    pub fn accuracy(&self, examples: &[Example]) -> Result<f64> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let correct = self
            .predict_batch(examples)?
            .iter()
            .zip(examples)
            .filter(|(p, e)| p.label == e.y)
            .count();
        Ok(correct as f64 / examples.len() as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.network.config.clone(),
            rows: self.network.rows,
            cols: self.network.cols,
            scaler: self.scaler.clone(),
            weights: self
                .network
                .params
                .iter()
                .map(|(name, t)| NamedTensor {
                    name: name.to_string(),
                    tensor: t.clone(),
                })
                .collect(),
            history: self.history.clone(),
            best_epoch: self.best_epoch,
        };
        let text = serde_json::to_string(&ck)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unrecognised format {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        let params = Params {
            names: ck.weights.iter().map(|w| w.name.clone()).collect(),
            tensors: ck
                .weights
                .into_iter()
                .map(|w| Tensor::new(&w.tensor.shape, w.tensor.data))
                .collect::<Result<_>>()?,
        };
        let network = Network::zeros(&ck.config, ck.rows, ck.cols)?.with_params(params)?;
        if ck.scaler.cols() != ck.cols {
            return Err(Error::Checkpoint("scaler width differs from the input width".into()));
        }
        Ok(TrainedModel {
            network,
            scaler: ck.scaler,
            history: ck.history,
            best_epoch: ck.best_epoch,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    #[serde(flatten)]
    tensor: Tensor,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    rows: usize,
    cols: usize,
    scaler: Scaler,
    weights: Vec<NamedTensor>,
    history: Vec<EpochStats>,
    best_epoch: usize,
}

struct Adam {
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    fn new(params: &Params) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut Params, grads: &Params, cfg: &ModelConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (k, p) in params.tensors.iter_mut().enumerate() {
            let g = &grads.tensors[k].data;
            let m = &mut self.m.tensors[k].data;
            let v = &mut self.v.tensors[k].data;
            for j in 0..p.data.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p.data[j] -= cfg.learning_rate * mh / (vh.sqrt() + ADAM_EPS);
            }
        }
    }
}

fn evaluate(net: &Network, examples: &[Example]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for e in examples {
        let z = net.logit(&e.slices())?;
        loss += bce_with_logit(z, f64::from(e.y));
        if label_for(sigmoid(z)) == e.y {
            correct += 1;
        }
    }
    let n = examples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch Adam for `config.epochs` epochs, keeping the weights of the
/// epoch with the best validation accuracy (earliest on ties). With no
/// validation set the last epoch is kept.
pub fn train(
    config: &ModelConfig,
    scaler: &Scaler,
    train_set: &[Example],
    val_set: &[Example],
) -> Result<TrainedModel> {
    config.validate()?;
    let first = train_set
        .first()
        .ok_or_else(|| Error::Config("empty training set".into()))?;
    let steps = config.arch.timesteps();
    let (rows, cols) = (first.xs[0].grid().rows, first.xs[0].grid().cols);
    let fp = scaler.fingerprint();
    for e in train_set.iter().chain(val_set) {
        if e.xs.len() != steps {
            return Err(Error::Shape(format!(
                "{} expects {steps} matrices per example, got {}",
                config.arch,
                e.xs.len()
            )));
        }
        if e.xs.iter().any(|g| g.fingerprint() != fp) {
            return Err(Error::ScalerMismatch);
        }
        if e.xs.iter().any(|g| g.grid().rows != rows || g.grid().cols != cols) {
            return Err(Error::Shape("examples have mixed matrix shapes".into()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Network::new(config, rows, cols, &mut rng)?;
    let mut adam = Adam::new(&net.params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Params)> = None;
    let diverged = |epoch| Error::Diverged {
        epoch,
        seed: config.seed,
    };

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(Vec<&[f64]>, u8)> = chunk
                .iter()
                .map(|&i| (train_set[i].slices(), train_set[i].y))
                .collect();
            let (loss, grads, logits) = match net.loss_and_grad(&batch) {
                Ok(r) => r,
                Err(Error::NonFinite { .. }) => return Err(diverged(epoch)),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(diverged(epoch));
            }
            loss_sum += loss * chunk.len() as f64;
            correct += logits
                .iter()
                .zip(&batch)
                .filter(|(z, (_, y))| label_for(sigmoid(**z)) == *y)
                .count();
            adam.step(&mut net.params, &grads, config);
        }
        let n = train_set.len() as f64;
        let (val_loss, val_accuracy) = if val_set.is_empty() {
            (None, None)
        } else {
            let (l, a) = match evaluate(&net, val_set) {
                Ok(r) => r,
                Err(Error::NonFinite { .. }) => return Err(diverged(epoch)),
                Err(e) => return Err(e),
            };
            (Some(l), Some(a))
        };
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            val_loss,
            val_accuracy,
        };
        debug!(?stats, "epoch");
        let score = val_accuracy.unwrap_or(f64::NEG_INFINITY);
        let improves = match &best {
            None => true,
            Some((s, _, _)) => score > *s || val_accuracy.is_none(),
        };
        if improves {
            best = Some((score, epoch, net.params.clone()));
        }
        history.push(stats);
    }

    let (best_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (0, net.params.clone()),
    };
    Ok(TrainedModel {
        network: net.with_params(params)?,
        scaler: scaler.clone(),
        history,
        best_epoch,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best_l2: f64,
    /// `(l2, mean validation accuracy)` per candidate, in grid order.
    pub scores: Vec<(f64, f64)>,
}

pub const DEFAULT_L2_GRID: [f64; 4] = [0.0, 1e-4, 1e-3, 1e-2];

/// Picks the l2 with the best mean validation accuracy over `repeats` seeds
/// (`base.seed + r`); ties go to the larger l2.
pub fn grid_search(
    base: &ModelConfig,
    scaler: &Scaler,
    train_set: &[Example],
    val_set: &[Example],
    grid: &[f64],
    repeats: usize,
) -> Result<GridOutcome> {
    if grid.is_empty() {
        return Err(Error::Config("l2 grid is empty".into()));
    }
    if repeats == 0 {
        return Err(Error::Config("grid search needs at least one repeat".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for &l2 in grid {
        let mut total = 0.0;
        for r in 0..repeats {
            let cfg = ModelConfig {
                l2,
                seed: base.seed.wrapping_add(r as u64),
                ..base.clone()
            };
            let model = train(&cfg, scaler, train_set, val_set)?;
            total += model.accuracy(val_set)?;
        }
        let mean = total / repeats as f64;
        info!(l2, mean_val_accuracy = mean, "grid candidate");
        scores.push((l2, mean));
    }
    Ok(GridOutcome {
        best_l2: pick_l2(&scores),
        scores,
    })
}

fn pick_l2(scores: &[(f64, f64)]) -> f64 {
    let mut best = scores[0];
    for &(l2, acc) in &scores[1..] {
        if acc > best.1 || (acc == best.1 && l2 > best.0) {
            best = (l2, acc);
        }
    }
    best.0
}
