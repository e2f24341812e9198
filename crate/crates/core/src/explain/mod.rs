//! Local surrogate attribution over individual matrix cells, and the
//! feature-wise, time-wise and per-day aggregations of it.
//!
//! Each of the `rows × cols` cells is one interpretable component. A
//! perturbation keeps a random subset of cells and resets the rest to a
//! baseline; a similarity-weighted ridge regression of the black box's
//! probability on the keep-mask gives one coefficient per cell.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};
use crate::featurize::{Grid, ScaledGrid, ROW_TIMES};
use crate::nnet::{label_for, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeSettings {
    pub n_samples: usize,
    /// Width of the exponential kernel on the masked-cell fraction.
    pub kernel_width: f64,
    pub ridge: f64,
    pub keep_probability: f64,
}

impl Default for LimeSettings {
    fn default() -> Self {
        LimeSettings {
            n_samples: 2000,
            kernel_width: 0.25,
            ridge: 1e-3,
            keep_probability: 0.5,
        }
    }
}

/// Anything that maps a matrix to a probability. Must be shareable across
/// the prediction fan-out.
pub trait BlackBox: Sync {
    fn predict_proba(&self, x: &Grid) -> Result<f64>;
}

/// A trained model explained through its most recent input matrix. For the
/// CNN-LSTM the two earlier matrices stay fixed as context.
pub struct ModelBlackBox<'a> {
    model: &'a TrainedModel,
    context: Vec<ScaledGrid>,
    template: ScaledGrid,
}

impl<'a> ModelBlackBox<'a> {
    /// `xs` is the example's full input, oldest first; the last matrix is
    /// the one perturbed.
    pub fn new(model: &'a TrainedModel, xs: &[ScaledGrid]) -> Result<Self> {
        let (last, context) = xs
            .split_last()
            .ok_or_else(|| Error::Shape("an example needs at least one matrix".into()))?;
        Ok(ModelBlackBox {
            model,
            context: context.to_vec(),
            template: last.clone(),
        })
    }

    /// The matrix being explained, in scaled units.
    pub fn instance(&self) -> &Grid {
        self.template.grid()
    }
}

impl BlackBox for ModelBlackBox<'_> {
    fn predict_proba(&self, x: &Grid) -> Result<f64> {
        let mut xs = self.context.clone();
        xs.push(self.template.with_values(x.data.clone())?);
        Ok(self.model.predict(&xs)?.probability)
    }
}

/// `f(x) = intercept + Σ coef ⊙ x`; its attribution is known in closed form.
#[derive(Debug, Clone)]
pub struct LinearBlackBox {
    pub coef: Grid,
    pub intercept: f64,
}

impl BlackBox for LinearBlackBox {
    fn predict_proba(&self, x: &Grid) -> Result<f64> {
        if x.data.len() != self.coef.data.len() {
            return Err(Error::Shape("input does not match the coefficient grid".into()));
        }
        Ok(self.intercept + x.data.iter().zip(&self.coef.data).map(|(a, b)| a * b).sum::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSample {
    /// Row-major, `true` where the original cell is kept.
    pub mask: Vec<bool>,
    pub x_perturbed: Grid,
    pub similarity: f64,
}

pub fn similarity(masked_fraction: f64, kernel_width: f64) -> f64 {
    (-(masked_fraction * masked_fraction) / (kernel_width * kernel_width)).exp()
}

/// Sample 0 keeps every cell; the rest keep each cell independently with
/// `settings.keep_probability`.
pub fn sample_perturbations(
    x: &Grid,
    baseline: &Grid,
    settings: &LimeSettings,
    seed: u64,
) -> Result<Vec<PerturbationSample>> {
    let cells = x.data.len();
    if baseline.rows != x.rows || baseline.cols != x.cols {
        return Err(Error::Shape("baseline does not match the instance".into()));
    }
    if settings.n_samples < cells {
        return Err(Error::Config(format!(
            "{} perturbation samples cannot determine {cells} cell weights",
            settings.n_samples
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(settings.n_samples);
    for s in 0..settings.n_samples {
        let mask: Vec<bool> = if s == 0 {
            vec![true; cells]
        } else {
            (0..cells)
                .map(|_| rng.random_bool(settings.keep_probability))
                .collect()
        };
        out.push(apply_mask(x, baseline, mask, settings.kernel_width));
    }
    Ok(out)
}

fn apply_mask(x: &Grid, baseline: &Grid, mask: Vec<bool>, kernel_width: f64) -> PerturbationSample {
    let data = x
        .data
        .iter()
        .zip(&baseline.data)
        .zip(&mask)
        .map(|((&v, &b), &keep)| if keep { v } else { b })
        .collect();
    let masked = mask.iter().filter(|&&k| !k).count() as f64 / mask.len() as f64;
    PerturbationSample {
        x_perturbed: Grid {
            rows: x.rows,
            cols: x.cols,
            data,
        },
        similarity: similarity(masked, kernel_width),
        mask,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub fidelity_r2: f64,
}

/// Similarity-weighted ridge regression of `targets` on the keep-masks, by
/// the normal equations. Weights are normalized to sum to one, so repeating
/// the sample set leaves the fit unchanged; the intercept is not penalized.
pub fn fit_surrogate(samples: &[PerturbationSample], targets: &[f64], ridge: f64) -> Result<Surrogate> {
    if samples.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} targets",
            samples.len(),
            targets.len()
        )));
    }
    if !(ridge > 0.0) {
        return Err(Error::Config("surrogate ridge must be positive".into()));
    }
    let first = samples
        .first()
        .ok_or_else(|| Error::Numeric("no perturbation samples".into()))?;
    if samples.iter().all(|s| s.mask == first.mask) {
        return Err(Error::Numeric("surrogate needs at least two distinct masks".into()));
    }
    let p = first.mask.len();
    let dim = p + 1;
    let total: f64 = samples.iter().map(|s| s.similarity).sum();
    let mut a = vec![0.0; dim * dim];
    let mut b = vec![0.0; dim];
    let mut active = Vec::with_capacity(dim);
    for (s, &y) in samples.iter().zip(targets) {
        let w = s.similarity / total;
        active.clear();
        active.push(0);
        active.extend(s.mask.iter().enumerate().filter(|(_, &k)| k).map(|(j, _)| j + 1));
        for &i in &active {
            b[i] += w * y;
            let row = &mut a[i * dim..(i + 1) * dim];
            for &j in &active {
                row[j] += w;
            }
        }
    }
    for j in 1..dim {
        a[j * dim + j] += ridge;
    }
    let chol = DMatrix::from_row_slice(dim, dim, &a)
        .cholesky()
        .ok_or_else(|| Error::Numeric("surrogate normal equations are singular".into()))?;
    let beta = chol.solve(&DVector::from_vec(b));
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("surrogate coefficients are not finite".into()));
    }
    let intercept = beta[0];
    let weights: Vec<f64> = beta.iter().skip(1).copied().collect();

    let mean_y: f64 = samples.iter().zip(targets).map(|(s, y)| s.similarity * y).sum::<f64>() / total;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (s, &y) in samples.iter().zip(targets) {
        let fit = intercept
            + s.mask
                .iter()
                .zip(&weights)
                .filter(|(&k, _)| k)
                .map(|(_, w)| w)
                .sum::<f64>();
        ss_res += s.similarity * (y - fit).powi(2);
        ss_tot += s.similarity * (y - mean_y).powi(2);
    }
    // A constant target has nothing left to explain.
    let fidelity_r2 = if ss_tot <= f64::EPSILON * total * mean_y.abs().max(1.0) {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(Surrogate {
        weights,
        intercept,
        fidelity_r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub day: NaiveDate,
    pub cell_weights: Grid,
    pub intercept: f64,
    pub fidelity_r2: f64,
    /// Black-box probability of the unperturbed instance.
    pub probability: f64,
    pub predicted: u8,
    pub correct: bool,
}

/// Per-instance seed from the run seed and the instance's date.
pub fn instance_seed(global: u64, day: NaiveDate) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in global.to_le_bytes().iter().chain(&day.num_days_from_ce().to_le_bytes()) {
        h = (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Samples, scores every perturbation with the black box (in parallel,
/// gathered in sample order), and fits the surrogate.
pub fn explain_instance(
    black_box: &dyn BlackBox,
    x: &Grid,
    baseline: &Grid,
    day: NaiveDate,
    label: u8,
    settings: &LimeSettings,
    global_seed: u64,
) -> Result<Attribution> {
    let samples = sample_perturbations(x, baseline, settings, instance_seed(global_seed, day))?;
    let probs: Vec<f64> = samples
        .par_iter()
        .map(|s| black_box.predict_proba(&s.x_perturbed))
        .collect::<Result<_>>()?;
    let fit = fit_surrogate(&samples, &probs, settings.ridge)?;
    let predicted = label_for(probs[0]);
    Ok(Attribution {
        day,
        cell_weights: Grid {
            rows: x.rows,
            cols: x.cols,
            data: fit.weights,
        },
        intercept: fit.intercept,
        fidelity_r2: fit.fidelity_r2,
        probability: probs[0],
        predicted,
        correct: predicted == label,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// One value per column, summed over the time rows.
    Feature,
    /// One value per time row, summed over the columns.
    Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub axis: Axis,
    pub keys: Vec<String>,
    pub values: Vec<f64>,
    /// Correct predictions the means were taken over.
    pub instances: usize,
}

impl ImportanceTable {
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Keys ordered by decreasing importance.
    pub fn ranking(&self) -> Vec<&str> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]));
        idx.into_iter().map(|i| self.keys[i].as_str()).collect()
    }
}

fn feature_mass(w: &Grid) -> Vec<f64> {
    (0..w.cols).map(|c| w.column(c).map(f64::abs).sum()).collect()
}

fn time_mass(w: &Grid) -> Vec<f64> {
    (0..w.rows).map(|r| w.row(r).iter().map(|v| v.abs()).sum()).collect()
}

/// Mean absolute cell weight per column or per row, over correct
/// predictions only. Empty when nothing was predicted correctly.
pub fn aggregate(attributions: &[Attribution], axis: Axis, column_names: &[String]) -> ImportanceTable {
    let correct: Vec<&Attribution> = attributions.iter().filter(|a| a.correct).collect();
    if correct.is_empty() {
        warn!(?axis, "no correct predictions; importance table is empty");
        return ImportanceTable {
            axis,
            keys: Vec::new(),
            values: Vec::new(),
            instances: 0,
        };
    }
    let keys: Vec<String> = match axis {
        Axis::Feature => column_names.to_vec(),
        Axis::Time => ROW_TIMES.iter().map(|s| s.to_string()).collect(),
    };
    let mut values = vec![0.0; keys.len()];
    for a in &correct {
        let mass = match axis {
            Axis::Feature => feature_mass(&a.cell_weights),
            Axis::Time => time_mass(&a.cell_weights),
        };
        for (v, m) in values.iter_mut().zip(mass) {
            *v += m;
        }
    }
    let n = correct.len() as f64;
    values.iter_mut().for_each(|v| *v /= n);
    ImportanceTable {
        axis,
        keys,
        values,
        instances: correct.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub day: NaiveDate,
    pub values: Vec<f64>,
}

/// Per-column attribution mass of each correct prediction, in input order.
pub fn instance_series(attributions: &[Attribution]) -> Vec<SeriesRow> {
    attributions
        .iter()
        .filter(|a| a.correct)
        .map(|a| SeriesRow {
            day: a.day,
            values: feature_mass(&a.cell_weights),
        })
        .collect()
}

#[derive(Serialize)]
struct AttributionRecord<'a> {
    day: NaiveDate,
    predicted: u8,
    correct: bool,
    fidelity_r2: f64,
    cell_weights: Vec<&'a [f64]>,
}

/// Line-JSON dump, one attribution per line.
pub fn write_attributions(path: &Path, attributions: &[Attribution]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for a in attributions {
        let rec = AttributionRecord {
            day: a.day,
            predicted: a.predicted,
            correct: a.correct,
            fidelity_r2: a.fidelity_r2,
            cell_weights: (0..a.cell_weights.rows).map(|r| a.cell_weights.row(r)).collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation, average ranks on ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[cfg(test)]
mod tests;
