//! Per-day feature matrices: twelve 2-hour rows of Twitter aggregates next to
//! the prior session's prices replicated down every row.

mod bow;
mod bucket;
mod ledger;
mod pipeline;
mod scaler;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{PriceBar, Tweet};

pub use bow::{bow_matrix, hash_token};
pub use bucket::{bucket, bucket_index, day_windows, DayWindow, WindowEnd};
pub use ledger::{writer_scores, WriterScoreLedger};
pub use pipeline::{
    prepare_days, FeatureSet, FeaturizeConfig, PreparedDay, ScoredTweet, WriterScope,
};
pub use scaler::{ScaledGrid, Scaler};

/// Time rows per matrix.
pub const ROWS: usize = 12;

/// Row labels, exchange-local, starting at the prior session's close.
pub const ROW_TIMES: [&str; ROWS] = [
    "16-18", "18-20", "20-22", "22-24", "0-2", "2-4", "4-6", "6-8", "8-10", "10-12", "12-14",
    "14-16",
];

pub const TWITTER_COLUMNS: [&str; 8] = [
    "writer_score",
    "n_comments",
    "n_likes",
    "n_retweets",
    "afinn",
    "vader",
    "polarity_sum",
    "tweet_volume",
];

pub const PRICE_COLUMNS: [&str; 8] = [
    "open",
    "high",
    "low",
    "close",
    "trade_volume",
    "lag1",
    "lag2",
    "lag3",
];

/// Column index of `tweet_volume` in the proposed matrix.
pub const TWEET_VOLUME_COL: usize = 7;

pub fn proposed_column_names() -> Vec<String> {
    TWITTER_COLUMNS
        .iter()
        .chain(PRICE_COLUMNS.iter())
        .map(|s| s.to_string())
        .collect()
}

/// Row-major real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Grid {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |r| self.get(r, c))
    }

    /// Side-by-side concatenation; both sides must have the same row count.
    pub fn hconcat(&self, right: &Grid) -> Result<Grid> {
        if self.rows != right.rows {
            return Err(Error::Shape(format!(
                "cannot concatenate {} rows with {} rows",
                self.rows, right.rows
            )));
        }
        let mut out = Grid::zeros(self.rows, self.cols + right.cols);
        for r in 0..self.rows {
            let dst = &mut out.data[r * out.cols..(r + 1) * out.cols];
            dst[..self.cols].copy_from_slice(self.row(r));
            dst[self.cols..].copy_from_slice(right.row(r));
        }
        Ok(out)
    }

    /// Keeps the listed columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Grid {
        let mut out = Grid::zeros(self.rows, cols.len());
        for r in 0..self.rows {
            for (j, &c) in cols.iter().enumerate() {
                out.set(r, j, self.get(r, c));
            }
        }
        out
    }
}

/// One day's input: `ROWS` time rows by named feature columns, labelled with
/// the target day it predicts.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub day: NaiveDate,
    pub values: Grid,
    pub column_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.values.rows, self.values.cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub day: NaiveDate,
    pub x: FeatureMatrix,
    pub label: u8,
}

/// Likes + comments + retweets.
pub fn total_engagement(tweet: &Tweet) -> u64 {
    tweet.total_engagement()
}

/// 1 when the session closed above its open; flat and down sessions are 0.
pub fn label(bar: &PriceBar) -> u8 {
    u8::from(bar.close > bar.open)
}

/// Joins the Twitter half (columns 1-8) and the price half (9-16).
pub fn assemble(day: NaiveDate, twitter: &Grid, price: &Grid) -> Result<FeatureMatrix> {
    if twitter.rows != ROWS
        || price.rows != ROWS
        || twitter.cols != TWITTER_COLUMNS.len()
        || price.cols != PRICE_COLUMNS.len()
    {
        return Err(Error::Shape(format!(
            "expected 12x8 halves, got {}x{} and {}x{}",
            twitter.rows, twitter.cols, price.rows, price.cols
        )));
    }
    Ok(FeatureMatrix {
        day,
        values: twitter.hconcat(price)?,
        column_names: proposed_column_names(),
    })
}

/// Per-bucket Twitter aggregates in [`TWITTER_COLUMNS`] order.
pub fn twitter_matrix(buckets: &[Vec<ScoredTweet>]) -> Result<Grid> {
    if buckets.len() != ROWS {
        return Err(Error::Shape(format!("expected {ROWS} buckets, got {}", buckets.len())));
    }
    let mut g = Grid::zeros(ROWS, TWITTER_COLUMNS.len());
    for (r, group) in buckets.iter().enumerate() {
        let mut row = [0.0; 8];
        for t in group {
            row[0] += t.writer_score as f64;
            row[1] += t.comments as f64;
            row[2] += t.likes as f64;
            row[3] += t.retweets as f64;
            row[4] += t.afinn as f64;
            row[5] += t.vader;
            row[6] += f64::from(t.polarity);
            row[7] += 1.0;
        }
        g.data[r * 8..(r + 1) * 8].copy_from_slice(&row);
    }
    Ok(g)
}

/// The prior session's `[open, high, low, close, volume, lag1, lag2, lag3]`
/// copied into every row. `lags[0]` is the label one session back.
pub fn price_matrix(prior: &PriceBar, lags: [u8; 3]) -> Grid {
    let row = [
        prior.open,
        prior.high,
        prior.low,
        prior.close,
        prior.volume as f64,
        f64::from(lags[0]),
        f64::from(lags[1]),
        f64::from(lags[2]),
    ];
    let mut g = Grid::zeros(ROWS, row.len());
    for r in 0..ROWS {
        g.data[r * row.len()..(r + 1) * row.len()].copy_from_slice(&row);
    }
    g
}

/// Line-JSON record of one labelled matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub day: NaiveDate,
    pub label: u8,
    pub row_times: Vec<String>,
    pub column_names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl From<&LabeledInstance> for MatrixRecord {
    fn from(inst: &LabeledInstance) -> Self {
        MatrixRecord {
            day: inst.day,
            label: inst.label,
            row_times: ROW_TIMES.iter().map(|s| s.to_string()).collect(),
            column_names: inst.x.column_names.clone(),
            values: inst.x.values.to_rows(),
        }
    }
}

impl MatrixRecord {
    pub fn into_instance(self) -> Result<LabeledInstance> {
        let values = Grid::from_rows(&self.values)?;
        if values.rows != ROWS || values.cols != self.column_names.len() {
            return Err(Error::Shape(format!(
                "record for {} is {}x{} with {} column names",
                self.day,
                values.rows,
                values.cols,
                self.column_names.len()
            )));
        }
        Ok(LabeledInstance {
            day: self.day,
            label: self.label,
            x: FeatureMatrix {
                day: self.day,
                values,
                column_names: self.column_names,
            },
        })
    }
}

pub fn write_jsonl(path: &Path, instances: &[LabeledInstance]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for inst in instances {
        serde_json::to_writer(&mut w, &MatrixRecord::from(inst))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<LabeledInstance>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str::<MatrixRecord>(&line)?.into_instance()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bar(o: f64, h: f64, l: f64, c: f64, v: u64) -> PriceBar {
        PriceBar {
            date: NaiveDate::from_ymd_opt(2019, 1, 2).unwrap(),
            open: o,
            high: h,
            low: l,
            close: c,
            volume: v,
            ticker: "AAPL".into(),
        }
    }

    fn scored(ws: u64, c: u64, l: u64, rt: u64, afinn: i64, vader: f64, pol: i8) -> ScoredTweet {
        ScoredTweet {
            id: String::new(),
            timestamp: chrono::DateTime::UNIX_EPOCH,
            writer_score: ws,
            comments: c,
            likes: l,
            retweets: rt,
            afinn,
            vader,
            polarity: pol,
            tokens: Vec::new(),
        }
    }

    #[test]
    fn engagement_sums() {
        let mut t = Tweet {
            id: "1".into(),
            author_id: "a".into(),
            timestamp: chrono::DateTime::UNIX_EPOCH,
            text: String::new(),
            likes: 10,
            comments: 5,
            retweets: 3,
            ticker: "AAPL".into(),
        };
        assert_eq!(total_engagement(&t), 18);
        (t.likes, t.comments, t.retweets) = (0, 0, 0);
        assert_eq!(total_engagement(&t), 0);
        t.likes = 40;
        assert_eq!(total_engagement(&t), 40);
    }

    #[test]
    fn labels() {
        assert_eq!(label(&bar(100.0, 106.0, 99.0, 105.0, 1)), 1);
        assert_eq!(label(&bar(100.0, 101.0, 94.0, 95.0, 1)), 0);
        assert_eq!(label(&bar(100.0, 101.0, 99.0, 100.0, 1)), 0);
    }

    #[test]
    fn twitter_rows() {
        let mut buckets = vec![Vec::new(); ROWS];
        buckets[0].push(scored(40, 5, 10, 3, 3, 0.6, 1));
        buckets[1].push(scored(0, 0, 0, 0, 0, 0.0, 1));
        buckets[1].push(scored(0, 0, 0, 0, 0, 0.0, -1));
        let g = twitter_matrix(&buckets).unwrap();
        assert_eq!(g.row(0), [40.0, 5.0, 10.0, 3.0, 3.0, 0.6, 1.0, 1.0]);
        assert_eq!(g.get(1, 6), 0.0);
        assert_eq!(g.get(1, 7), 2.0);
        assert!(g.row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn price_rows_replicated() {
        let g = price_matrix(&bar(100.0, 110.0, 95.0, 105.0, 1_000_000), [1, 0, 1]);
        for r in 0..ROWS {
            assert_eq!(g.row(r), [100.0, 110.0, 95.0, 105.0, 1e6, 1.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn assemble_shapes() {
        let day = NaiveDate::from_ymd_opt(2019, 1, 2).unwrap();
        let m = assemble(day, &Grid::zeros(12, 8), &Grid::zeros(12, 8)).unwrap();
        assert_eq!(m.shape(), (12, 16));
        assert_eq!(m.column_names.len(), 16);
        assert!(m.values.data.iter().all(|&v| v == 0.0));
        assert!(matches!(
            assemble(day, &Grid::zeros(11, 8), &Grid::zeros(12, 8)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let day = NaiveDate::from_ymd_opt(2019, 1, 2).unwrap();
        let mut x = assemble(day, &Grid::zeros(12, 8), &Grid::zeros(12, 8)).unwrap();
        x.values.set(3, 7, 2.0);
        let inst = LabeledInstance { day, x, label: 1 };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        write_jsonl(&path, std::slice::from_ref(&inst)).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), vec![inst]);
        let line = std::fs::read_to_string(&path).unwrap();
        assert!(line.starts_with(r#"{"day":"2019-01-02","label":1,"row_times":["16-18","#));
    }
}
