use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::LimeSettings;
use crate::featurize::{FeatureSet, FeaturizeConfig};
use crate::ingest::default_window;
use crate::nnet::{Arch, ModelConfig, DEFAULT_L2_GRID};

/// Overrides the data directory for every ticker.
pub const ENV_DATA_DIR: &str = "TWEETMATRIX_DATA_DIR";
/// Per-ticker overrides: `TWEETMATRIX_TWEETS_<TICKER>`, `TWEETMATRIX_BARS_<TICKER>`.
pub const ENV_TWEETS_PREFIX: &str = "TWEETMATRIX_TWEETS_";
pub const ENV_BARS_PREFIX: &str = "TWEETMATRIX_BARS_";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataFiles {
    pub tweets: Option<PathBuf>,
    pub bars: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Holds `<TICKER>_tweets.csv` and `<TICKER>_bars.csv` unless a ticker
    /// has explicit files.
    pub dir: PathBuf,
    pub files: BTreeMap<String, DataFiles>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: PathBuf::from("data"),
            files: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub enabled: bool,
    /// Explain every cell, not just the proposed-matrix CNN.
    pub all_cells: bool,
    #[serde(flatten)]
    pub lime: LimeSettings,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            enabled: true,
            all_cells: false,
            lime: LimeSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tickers: Vec<String>,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub feature_sets: Vec<FeatureSet>,
    pub archs: Vec<Arch>,
    pub repeats: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub seed: u64,
    pub l2_grid: Vec<f64>,
    /// Seeds averaged per grid candidate.
    pub grid_repeats: usize,
    pub data: DataConfig,
    pub featurize: FeaturizeConfig,
    /// Base network settings; `arch`, `l2` and `seed` are set per run.
    pub model: ModelConfig,
    pub explain: ExplainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let (start, end) = default_window();
        ExperimentConfig {
            tickers: vec!["AAPL".into(), "AMZN".into(), "TSLA".into()],
            start,
            end,
            feature_sets: FeatureSet::ALL.to_vec(),
            archs: Arch::ALL.to_vec(),
            repeats: 10,
            split: [0.7, 0.1, 0.2],
            seed: 42,
            l2_grid: DEFAULT_L2_GRID.to_vec(),
            grid_repeats: 1,
            data: DataConfig::default(),
            featurize: FeaturizeConfig::default(),
            model: ModelConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file; a relative `data.dir` is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.data.dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.data.dir = parent.join(&cfg.data.dir);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.tickers.is_empty() {
            return bad("no tickers configured".into());
        }
        if self.feature_sets.is_empty() || self.archs.is_empty() {
            return bad("need at least one feature set and one architecture".into());
        }
        if self.repeats == 0 || self.grid_repeats == 0 {
            return bad("repeats and grid_repeats must be at least 1".into());
        }
        if self.split.iter().any(|f| !(*f > 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions {:?} must be positive and sum to 1", self.split));
        }
        if self.start > self.end {
            return bad(format!("start {} is after end {}", self.start, self.end));
        }
        if self.l2_grid.is_empty() || self.l2_grid.iter().any(|v| !(*v >= 0.0)) {
            return bad("l2_grid must hold non-negative values".into());
        }
        self.model.validate()
    }

    /// Tweet and bar files for a ticker, after environment overrides.
    pub fn data_paths(&self, ticker: &str) -> (PathBuf, PathBuf) {
        let dir = std::env::var_os(ENV_DATA_DIR)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.data.dir.clone());
        let files = self.data.files.get(ticker).cloned().unwrap_or_default();
        let env = |prefix: &str| std::env::var_os(format!("{prefix}{}", ticker.to_uppercase())).map(PathBuf::from);
        let tweets = env(ENV_TWEETS_PREFIX)
            .or(files.tweets)
            .unwrap_or_else(|| dir.join(format!("{ticker}_tweets.csv")));
        let bars = env(ENV_BARS_PREFIX)
            .or(files.bars)
            .unwrap_or_else(|| dir.join(format!("{ticker}_bars.csv")));
        (tweets, bars)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            tickers = ["SYN"]
            feature_sets = ["proposed", "price_only"]
            archs = ["cnn"]
            repeats = 3
            [model]
            epochs = 50
            [explain]
            n_samples = 500
            "#,
        )
        .unwrap();
        assert_eq!(cfg.feature_sets, [FeatureSet::Proposed, FeatureSet::PriceOnly]);
        assert_eq!(cfg.model.epochs, 50);
        assert_eq!(cfg.model.batch_size, 16);
        assert_eq!(cfg.explain.lime.n_samples, 500);
        assert_eq!(cfg.split, [0.7, 0.1, 0.2]);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("split = [0.5, 0.1, 0.1]").is_err());
        assert!(ExperimentConfig::from_toml("repeats = 0").is_err());
        assert!(ExperimentConfig::from_toml("feature_sets = [\"doc2vec8\"]").is_err());
        assert!(ExperimentConfig::from_toml("typo_key = 1").is_err());
    }

    #[test]
    fn explicit_files_beat_the_directory() {
        let mut cfg = ExperimentConfig::default();
        cfg.data.dir = PathBuf::from("/d");
        cfg.data.files.insert(
            "ZZQQ".into(),
            DataFiles {
                tweets: Some("/x/t.jsonl".into()),
                bars: None,
            },
        );
        let (t, b) = cfg.data_paths("ZZQQ");
        assert_eq!(t, PathBuf::from("/x/t.jsonl"));
        assert_eq!(b, PathBuf::from("/d/ZZQQ_bars.csv"));
    }
}
