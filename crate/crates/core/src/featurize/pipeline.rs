use std::collections::HashMap;

use chrono::{DateTime, NaiveDate, Utc};
use chrono_tz::Tz;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{
    assemble, bow_matrix, bucket, day_windows, label, price_matrix, twitter_matrix, FeatureMatrix,
    Grid, LabeledInstance, WindowEnd, PRICE_COLUMNS, TWITTER_COLUMNS,
};
use crate::error::{Error, Result};
use crate::ingest::{filter_engagement, PriceBar, Tweet, DEFAULT_ENGAGEMENT_THRESHOLD};
use crate::sentiment::SentimentScorer;
use crate::textprep::stem;

/// Whose history feeds the writer score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriterScope {
    /// One ledger over every ticker's posts.
    #[default]
    Global,
    PerTicker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizeConfig {
    pub timezone: String,
    pub window_end: WindowEnd,
    pub engagement_threshold: u64,
    /// Calendar days between consecutive bars beyond which the later day is
    /// skipped instead of inheriting a stale prior session.
    pub max_gap_days: i64,
    pub writer_scope: WriterScope,
    pub bow_seed: u64,
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        FeaturizeConfig {
            timezone: "America/New_York".into(),
            window_end: WindowEnd::TargetClose,
            engagement_threshold: DEFAULT_ENGAGEMENT_THRESHOLD,
            max_gap_days: 5,
            writer_scope: WriterScope::Global,
            bow_seed: 0x5eed,
        }
    }
}

/// A filtered tweet with everything the matrix builders read.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTweet {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub writer_score: u64,
    pub comments: u64,
    pub likes: u64,
    pub retweets: u64,
    pub afinn: i64,
    pub vader: f64,
    pub polarity: i8,
    /// Stemmed content tokens, for the bag-of-words benchmark.
    pub tokens: Vec<String>,
}

/// Everything needed to build any feature set for one target day.
#[derive(Debug, Clone)]
pub struct PreparedDay {
    pub day: NaiveDate,
    pub label: u8,
    pub prior_bar: PriceBar,
    pub lags: [u8; 3],
    pub buckets: Vec<Vec<ScoredTweet>>,
}

/// Filters, scores and buckets one ticker's tweets against its bars.
///
/// `tweets` are the ticker's windowed, unfiltered posts; `writer` maps tweet
/// id to writer score from a ledger pass the caller ran beforehand (see
/// [`super::writer_scores`]). Emits one day per bar that has three earlier
/// bars, skipping days whose prior session is more than `max_gap_days` back.
pub fn prepare_days(
    tweets: &[Tweet],
    bars: &[PriceBar],
    writer: &HashMap<String, u64>,
    scorer: &SentimentScorer,
    cfg: &FeaturizeConfig,
) -> Result<Vec<PreparedDay>> {
    let tz: Tz = crate::ingest::parse_tz(&cfg.timezone)?;
    let mut kept = filter_engagement(tweets, cfg.engagement_threshold);
    crate::ingest::sort_tweets(&mut kept);
    let scored: Vec<ScoredTweet> = kept
        .par_iter()
        .map(|t| {
            let ws = *writer.get(&t.id).ok_or_else(|| {
                Error::Config(format!("tweet {} is missing from the writer-score ledger", t.id))
            })?;
            let s = scorer.score(&t.text);
            let tokens = crate::textprep::content_tokens(&t.text, &scorer.stopwords)
                .iter()
                .map(|w| stem(w))
                .collect();
            Ok(ScoredTweet {
                id: t.id.clone(),
                timestamp: t.timestamp,
                writer_score: ws,
                comments: t.comments,
                likes: t.likes,
                retweets: t.retweets,
                afinn: s.afinn,
                vader: s.vader,
                polarity: s.polarity,
                tokens,
            })
        })
        .collect::<Result<_>>()?;

    let windows: HashMap<NaiveDate, _> = day_windows(bars, cfg.window_end, tz)
        .into_iter()
        .map(|w| (w.target, w))
        .collect();
    let mut days = Vec::new();
    for i in 3..bars.len() {
        let gap = (bars[i].date - bars[i - 1].date).num_days();
        if gap > cfg.max_gap_days {
            warn!(day = %bars[i].date, gap, "prior session too far back; day skipped");
            continue;
        }
        let window = windows[&bars[i].date];
        days.push(PreparedDay {
            day: bars[i].date,
            label: label(&bars[i]),
            prior_bar: bars[i - 1].clone(),
            lags: [label(&bars[i - 1]), label(&bars[i - 2]), label(&bars[i - 3])],
            buckets: bucket(&scored, |t| t.timestamp, &window, tz),
        });
    }
    Ok(days)
}

/// The proposed matrix and the benchmark inputs it is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Proposed,
    Bow8,
    Bow16,
    Bow24,
    SentimentPrice,
    PriceOnly,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 6] = [
        FeatureSet::Proposed,
        FeatureSet::Bow8,
        FeatureSet::Bow16,
        FeatureSet::Bow24,
        FeatureSet::SentimentPrice,
        FeatureSet::PriceOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Proposed => "proposed",
            FeatureSet::Bow8 => "bow8",
            FeatureSet::Bow16 => "bow16",
            FeatureSet::Bow24 => "bow24",
            FeatureSet::SentimentPrice => "sentiment_price",
            FeatureSet::PriceOnly => "price_only",
        }
    }

    pub fn column_names(self) -> Vec<String> {
        let twitter: Vec<String> = match self {
            FeatureSet::Proposed => TWITTER_COLUMNS.iter().map(|s| s.to_string()).collect(),
            FeatureSet::Bow8 | FeatureSet::Bow16 | FeatureSet::Bow24 => {
                (0..self.bow_dim().unwrap()).map(|i| format!("bow_{i}")).collect()
            }
            FeatureSet::SentimentPrice => vec!["afinn".into(), "vader".into(), "polarity_sum".into()],
            FeatureSet::PriceOnly => Vec::new(),
        };
        twitter
            .into_iter()
            .chain(PRICE_COLUMNS.iter().map(|s| s.to_string()))
            .collect()
    }

    pub fn cols(self) -> usize {
        self.column_names().len()
    }

    fn bow_dim(self) -> Option<usize> {
        match self {
            FeatureSet::Bow8 => Some(8),
            FeatureSet::Bow16 => Some(16),
            FeatureSet::Bow24 => Some(24),
            _ => None,
        }
    }

    pub fn build(self, day: &PreparedDay, bow_seed: u64) -> Result<LabeledInstance> {
        let price = price_matrix(&day.prior_bar, day.lags);
        let x = match self {
            FeatureSet::Proposed => assemble(day.day, &twitter_matrix(&day.buckets)?, &price)?,
            _ => {
                let left = match self {
                    FeatureSet::SentimentPrice => {
                        twitter_matrix(&day.buckets)?.select_columns(&[4, 5, 6])
                    }
                    FeatureSet::PriceOnly => Grid::zeros(price.rows, 0),
                    _ => bow_matrix(&day.buckets, self.bow_dim().unwrap(), bow_seed),
                };
                FeatureMatrix {
                    day: day.day,
                    values: left.hconcat(&price)?,
                    column_names: self.column_names(),
                }
            }
        };
        Ok(LabeledInstance {
            day: day.day,
            x,
            label: day.label,
        })
    }

    pub fn build_all(self, days: &[PreparedDay], bow_seed: u64) -> Result<Vec<LabeledInstance>> {
        days.iter().map(|d| self.build(d, bow_seed)).collect()
    }
}

impl std::fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature set {s:?}")))
    }
}
