use std::collections::BTreeSet;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::config::ExperimentConfig;
use super::split::split_chronological;
use crate::error::{Error, Result};
use crate::explain::{
    aggregate, explain_instance, instance_series, Attribution, Axis, ImportanceTable, ModelBlackBox,
    SeriesRow,
};
use crate::featurize::{
    prepare_days, writer_scores, FeatureSet, Grid, PreparedDay, Scaler, WriterScope,
};
use crate::ingest::{load_bars, load_tweets, parse_tz, window, Tweet};
use crate::nnet::{grid_search, train, Arch, Example, ModelConfig, TrainedModel};
use crate::sentiment::SentimentScorer;

/// Prepared days of one ticker, or why they could not be built.
pub struct TickerData {
    pub ticker: String,
    pub days: Result<Vec<PreparedDay>>,
}

/// Loads, windows, scores and buckets every configured ticker. A ticker that
/// fails to load only fails its own cells.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Vec<TickerData>> {
    let tz = parse_tz(&cfg.featurize.timezone)?;
    let corpora: Vec<(String, Result<crate::ingest::AlignedCorpus>)> = cfg
        .tickers
        .iter()
        .map(|t| {
            let (tweets_path, bars_path) = cfg.data_paths(t);
            let corpus = (|| {
                let load = load_tweets(&tweets_path, t)?;
                if !load.rejects.is_empty() {
                    warn!(ticker = %t, rejects = load.rejects.len(), "malformed tweet rows skipped");
                }
                let bars = load_bars(&bars_path, t)?;
                window(&load.tweets, &bars, cfg.start, cfg.end, tz)
            })();
            if let Err(e) = &corpus {
                warn!(ticker = %t, error = %e, "ticker data unavailable");
            }
            (t.clone(), corpus)
        })
        .collect();

    let global = match cfg.featurize.writer_scope {
        WriterScope::Global => {
            let all: Vec<Tweet> = corpora
                .iter()
                .filter_map(|(_, c)| c.as_ref().ok())
                .flat_map(|c| c.tweets.iter().cloned())
                .collect();
            Some(writer_scores(&all)?)
        }
        WriterScope::PerTicker => None,
    };
    let scorer = SentimentScorer::default();
    Ok(corpora
        .into_iter()
        .map(|(ticker, corpus)| {
            let days = corpus.and_then(|c| {
                let own;
                let ws = match &global {
                    Some(g) => g,
                    None => {
                        own = writer_scores(&c.tweets)?;
                        &own
                    }
                };
                prepare_days(&c.tweets, &c.bars, ws, &scorer, &cfg.featurize)
            });
            if let Ok(d) = &days {
                info!(ticker = %ticker, days = d.len(), "prepared");
            }
            TickerData { ticker, days }
        })
        .collect())
}

/// One example before scaling: the target day's matrix, preceded by its two
/// predecessors for the CNN-LSTM.
#[derive(Debug, Clone)]
pub struct RawExample {
    pub day: NaiveDate,
    pub xs: Vec<Grid>,
    pub y: u8,
}

/// Builds a feature set's examples. CNN-LSTM examples need two earlier days
/// that each directly precede the next (no skipped gap in between).
pub fn build_examples(days: &[PreparedDay], fs: FeatureSet, arch: Arch, bow_seed: u64) -> Result<Vec<RawExample>> {
    let instances = fs.build_all(days, bow_seed)?;
    let steps = arch.timesteps();
    let mut out = Vec::with_capacity(instances.len());
    for k in (steps - 1)..instances.len() {
        let chained = (k + 1 - steps..k).all(|j| days[j].day == days[j + 1].prior_bar.date);
        if !chained {
            continue;
        }
        out.push(RawExample {
            day: instances[k].day,
            xs: instances[k + 1 - steps..=k].iter().map(|i| i.x.values.clone()).collect(),
            y: instances[k].label,
        });
    }
    Ok(out)
}

/// Distinct input matrices of a set of examples, in first-seen order. A
/// CNN-LSTM sees most days three times; each counts once.
fn distinct_matrices(examples: &[RawExample]) -> Vec<&Grid> {
    let mut seen = BTreeSet::new();
    examples
        .iter()
        .flat_map(|e| e.xs.iter())
        .filter(|g| seen.insert(g.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()))
        .collect()
}

pub fn scale_examples(scaler: &Scaler, raw: &[RawExample]) -> Result<Vec<Example>> {
    raw.iter()
        .map(|e| {
            Ok(Example {
                xs: e.xs.iter().map(|g| scaler.apply(g)).collect::<Result<_>>()?,
                y: e.y,
            })
        })
        .collect()
}

/// Everything a cell trains and evaluates on.
pub struct CellData {
    pub scaler: Scaler,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
    pub test_days: Vec<NaiveDate>,
    /// Per-cell mean of the distinct scaled training matrices.
    pub baseline: Grid,
}

/// Builds, splits and scales a cell's examples. The scaler is fitted on the
/// training block unless one is given (a saved model's).
pub fn cell_data(
    cfg: &ExperimentConfig,
    days: &[PreparedDay],
    fs: FeatureSet,
    arch: Arch,
    scaler: Option<&Scaler>,
) -> Result<CellData> {
    let raw = build_examples(days, fs, arch, cfg.featurize.bow_seed)?;
    let (tr, va, te) = split_chronological(raw, cfg.split)?;
    let fit_on = distinct_matrices(&tr);
    let scaler = match scaler {
        Some(s) => s.clone(),
        None => Scaler::fit(fit_on.iter().copied())?,
    };
    let mut baseline = Grid::zeros(fit_on[0].rows, fit_on[0].cols);
    for g in &fit_on {
        let s = scaler.apply(g)?;
        for (b, v) in baseline.data.iter_mut().zip(&s.grid().data) {
            *b += v;
        }
    }
    baseline.data.iter_mut().for_each(|b| *b /= fit_on.len() as f64);
    Ok(CellData {
        train: scale_examples(&scaler, &tr)?,
        val: scale_examples(&scaler, &va)?,
        test: scale_examples(&scaler, &te)?,
        test_days: te.iter().map(|e| e.day).collect(),
        scaler,
        baseline,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub ticker: String,
    pub feature_set: FeatureSet,
    pub arch: Arch,
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.ticker, self.feature_set, self.arch)
    }
}

/// Accuracies of one training run, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub seed: u64,
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Means {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    /// Set when the cell failed; the other fields are then empty.
    pub error: Option<String>,
    /// Train / validation / test sizes.
    pub sizes: [usize; 3],
    pub l2: Option<f64>,
    /// `(l2, mean validation accuracy in [0, 1])` per grid candidate.
    pub grid: Vec<(f64, f64)>,
    pub repeats: Vec<RepeatResult>,
    pub mean: Option<Means>,
}

impl CellResult {
    fn failed(key: CellKey, e: &Error) -> Self {
        CellResult {
            key,
            error: Some(e.to_string()),
            sizes: [0; 3],
            l2: None,
            grid: Vec::new(),
            repeats: Vec::new(),
            mean: None,
        }
    }

    /// Index of the best-test repeat, earliest on ties.
    pub fn best_repeat(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, r) in self.repeats.iter().enumerate() {
            if best.is_none_or(|b| r.test > self.repeats[b].test) {
                best = Some(i);
            }
        }
        best
    }
}

pub fn mean_of(repeats: &[RepeatResult]) -> Option<Means> {
    if repeats.is_empty() {
        return None;
    }
    let n = repeats.len() as f64;
    Some(Means {
        train: repeats.iter().map(|r| r.train).sum::<f64>() / n,
        val: repeats.iter().map(|r| r.val).sum::<f64>() / n,
        test: repeats.iter().map(|r| r.test).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub key: CellKey,
    /// Repeat whose model was explained.
    pub repeat: usize,
    pub error: Option<String>,
    pub feature_table: Option<ImportanceTable>,
    pub time_table: Option<ImportanceTable>,
    pub series: Vec<SeriesRow>,
    pub column_names: Vec<String>,
    pub attributions: Vec<Attribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub repeats: usize,
    pub tickers: Vec<String>,
    pub cells: Vec<CellResult>,
    pub explanations: Vec<Explanation>,
}

impl RunReport {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
            + self.explanations.iter().filter(|e| e.error.is_some()).count()
    }

    pub fn cell(&self, ticker: &str, fs: FeatureSet, arch: Arch) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.key.ticker == ticker && c.key.feature_set == fs && c.key.arch == arch)
    }
}

/// Report plus the best-test model of every successful cell.
pub struct ExperimentOutput {
    pub report: RunReport,
    pub models: Vec<(CellKey, TrainedModel)>,
}

struct CellRun {
    result: CellResult,
    best: Option<TrainedModel>,
    data: Option<CellData>,
}

/// Train, validation and test accuracy of a model on a cell's data.
pub fn evaluate_model(model: &TrainedModel, data: &CellData) -> Result<RepeatResult> {
    Ok(RepeatResult {
        seed: model.config().seed,
        train: 100.0 * model.accuracy(&data.train)?,
        val: 100.0 * model.accuracy(&data.val)?,
        test: 100.0 * model.accuracy(&data.test)?,
        best_epoch: model.best_epoch,
    })
}

fn run_cell(cfg: &ExperimentConfig, days: &[PreparedDay], key: &CellKey) -> Result<CellRun> {
    let data = cell_data(cfg, days, key.feature_set, key.arch, None)?;
    let base = ModelConfig {
        arch: key.arch,
        seed: cfg.seed,
        ..cfg.model.clone()
    };
    let (l2, grid) = if cfg.l2_grid.len() == 1 {
        (cfg.l2_grid[0], Vec::new())
    } else {
        let g = grid_search(&base, &data.scaler, &data.train, &data.val, &cfg.l2_grid, cfg.grid_repeats)?;
        (g.best_l2, g.scores)
    };
    info!(cell = %key, l2, "training repeats");
    let runs: Vec<(RepeatResult, TrainedModel)> = (0..cfg.repeats)
        .into_par_iter()
        .map(|i| {
            let mc = ModelConfig {
                l2,
                seed: cfg.seed.wrapping_add(i as u64),
                ..base.clone()
            };
            let model = train(&mc, &data.scaler, &data.train, &data.val)?;
            Ok((evaluate_model(&model, &data)?, model))
        })
        .collect::<Result<_>>()?;
    let (repeats, models): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let result = CellResult {
        key: key.clone(),
        error: None,
        sizes: [data.train.len(), data.val.len(), data.test.len()],
        l2: Some(l2),
        grid,
        mean: mean_of(&repeats),
        repeats,
    };
    let best = result.best_repeat().map(|b| models[b].clone());
    if let Some(m) = &result.mean {
        info!(cell = %key, train = m.train, val = m.val, test = m.test, "cell done");
    }
    Ok(CellRun {
        result,
        best,
        data: Some(data),
    })
}

/// Explains every test instance of a trained cell against its baseline.
pub fn explain_cell(
    cfg: &ExperimentConfig,
    key: &CellKey,
    repeat: usize,
    model: &TrainedModel,
    data: &CellData,
) -> Explanation {
    let names = key.feature_set.column_names();
    let attributions: Result<Vec<Attribution>> = data
        .test
        .iter()
        .zip(&data.test_days)
        .map(|(ex, day)| {
            let bb = ModelBlackBox::new(model, &ex.xs)?;
            explain_instance(&bb, bb.instance(), &data.baseline, *day, ex.y, &cfg.explain.lime, cfg.seed)
        })
        .collect();
    match attributions {
        Ok(atts) => {
            let feature_table = aggregate(&atts, Axis::Feature, &names);
            let time_table = aggregate(&atts, Axis::Time, &names);
            info!(cell = %key, instances = feature_table.instances, "explained");
            Explanation {
                key: key.clone(),
                repeat,
                error: None,
                series: instance_series(&atts),
                feature_table: (!feature_table.is_empty()).then_some(feature_table),
                time_table: (!time_table.is_empty()).then_some(time_table),
                column_names: names,
                attributions: atts,
            }
        }
        Err(e) => {
            warn!(cell = %key, error = %e, "explanation failed");
            Explanation {
                key: key.clone(),
                repeat,
                error: Some(e.to_string()),
                feature_table: None,
                time_table: None,
                series: Vec::new(),
                column_names: names,
                attributions: Vec::new(),
            }
        }
    }
}

/// Whether the config asks for this cell to be explained.
pub fn wants_explanation(cfg: &ExperimentConfig, key: &CellKey) -> bool {
    cfg.explain.enabled
        && (cfg.explain.all_cells || (key.feature_set == FeatureSet::Proposed && key.arch == Arch::Cnn))
}

pub fn cell_keys(cfg: &ExperimentConfig) -> Vec<CellKey> {
    let mut keys = Vec::new();
    for t in &cfg.tickers {
        for &fs in &cfg.feature_sets {
            for &arch in &cfg.archs {
                keys.push(CellKey {
                    ticker: t.clone(),
                    feature_set: fs,
                    arch,
                });
            }
        }
    }
    keys
}

/// Runs the full cross of tickers × feature sets × architectures. Errors
/// inside a cell mark that cell failed; only config and ledger problems are
/// fatal.
pub fn run_experiment_with_models(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let days_of = |ticker: &str| -> std::result::Result<&Vec<PreparedDay>, &Error> {
        data.iter()
            .find(|d| d.ticker == ticker)
            .expect("every configured ticker was loaded")
            .days
            .as_ref()
    };
    let keys = cell_keys(cfg);
    let runs: Vec<(CellRun, Option<Explanation>)> = keys
        .par_iter()
        .map(|key| {
            let run = match days_of(&key.ticker) {
                Ok(days) => run_cell(cfg, days, key),
                Err(e) => Err(Error::Config(format!("data for {}: {e}", key.ticker))),
            };
            let run = run.unwrap_or_else(|e| {
                warn!(cell = %key, error = %e, "cell failed");
                CellRun {
                    result: CellResult::failed(key.clone(), &e),
                    best: None,
                    data: None,
                }
            });
            let explanation = match (&run.best, &run.data, run.result.best_repeat()) {
                (Some(model), Some(data), Some(repeat)) if wants_explanation(cfg, key) => {
                    Some(explain_cell(cfg, key, repeat, model, data))
                }
                _ => None,
            };
            (run, explanation)
        })
        .collect();

    let mut cells = Vec::with_capacity(runs.len());
    let mut explanations = Vec::new();
    let mut models = Vec::new();
    for (run, explanation) in runs {
        if let Some(m) = run.best {
            models.push((run.result.key.clone(), m));
        }
        cells.push(run.result);
        explanations.extend(explanation);
    }
    Ok(ExperimentOutput {
        report: RunReport {
            seed: cfg.seed,
            repeats: cfg.repeats,
            tickers: cfg.tickers.clone(),
            cells,
            explanations,
        },
        models,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    Ok(run_experiment_with_models(cfg)?.report)
}
