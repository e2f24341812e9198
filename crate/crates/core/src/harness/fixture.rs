//! Synthetic tweets and bars with a known, planted relationship between
//! evening tweet volume and the next session's direction.
//!
//! Each target day draws a regime. On planted days the 20-22 bucket of the
//! day's window carries a distinctive tweet count and the label follows it
//! with probability `planted_accuracy`; on the other days the bucket has an
//! ordinary count and the label is a fair coin. Planted days split into a
//! high-volume regime (label up) and, with probability `down_share`, a
//! low-volume regime (label down). `down_share = 0` plants only the
//! high-volume/up regime.
//!
//! Only the count carries the regime. The 20-22 posts share a bucket-level
//! engagement total drawn independently of how many there are, use
//! sentiment-neutral text, and come from single-use accounts (writer score
//! 0). Everything else is stationary: prices revert to a fixed level and
//! the regular author pool turns over in cohorts, so no column drifts away
//! from what the training block saw.

use std::fs;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, TimeZone, Weekday};
use chrono_tz::Tz;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::ROWS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureParams {
    pub seed: u64,
    /// Trading days (bars) to generate.
    pub days: usize,
    pub ticker: String,
    pub start: NaiveDate,
    pub timezone: String,
    pub planted_fraction: f64,
    pub planted_accuracy: f64,
    pub down_share: f64,
    /// Range of tweet counts in the 20-22 bucket on high-volume days.
    pub high_volume: (u32, u32),
    /// Same, on unplanted days.
    pub normal_volume: (u32, u32),
    /// Same, on low-volume days.
    pub low_volume: (u32, u32),
    /// Range of the 20-22 bucket's total engagement, whatever its count.
    pub signal_engagement: (u64, u64),
    /// Mean posts in every other 2-hour bucket.
    pub background_rate: f64,
    pub authors: usize,
    /// Share of background posts generated below the engagement threshold.
    pub low_engagement_share: f64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        FixtureParams {
            seed: 7,
            days: 400,
            ticker: "SYN".into(),
            start: NaiveDate::from_ymd_opt(2017, 1, 2).expect("valid date"),
            timezone: "America/New_York".into(),
            planted_fraction: 0.5,
            planted_accuracy: 0.9,
            down_share: 0.5,
            high_volume: (12, 16),
            normal_volume: (5, 8),
            low_volume: (1, 2),
            signal_engagement: (800, 1600),
            background_rate: 0.6,
            authors: 40,
            low_engagement_share: 0.1,
        }
    }
}

impl FixtureParams {
    /// Accuracy of the best possible rule given the regimes (which are
    /// recoverable from the bucket counts).
    pub fn bayes_rate(&self) -> f64 {
        self.planted_fraction * self.planted_accuracy + (1.0 - self.planted_fraction) * 0.5
    }

    /// Expected share of up labels.
    pub fn base_rate(&self) -> f64 {
        let up = 1.0 - self.down_share;
        self.planted_fraction
            * (up * self.planted_accuracy + self.down_share * (1.0 - self.planted_accuracy))
            + (1.0 - self.planted_fraction) * 0.5
    }

    fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.days < 10 {
            return Err(Error::Config(format!("fixture needs at least 10 days, got {}", self.days)));
        }
        if !(unit(self.planted_fraction) && unit(self.planted_accuracy) && unit(self.down_share) && unit(self.low_engagement_share)) {
            return Err(Error::Config("fixture probabilities must lie in [0, 1]".into()));
        }
        let ranges = [self.high_volume, self.normal_volume, self.low_volume];
        if ranges.iter().any(|r| r.0 > r.1) || self.signal_engagement.0 > self.signal_engagement.1 {
            return Err(Error::Config("ranges must be (low, high)".into()));
        }
        let most = ranges.iter().map(|r| u64::from(r.1)).max().unwrap_or(0);
        if self.signal_engagement.0 < 40 * most {
            return Err(Error::Config(
                "signal_engagement must leave every 20-22 post at the engagement threshold".into(),
            ));
        }
        if self.authors == 0 || !(self.background_rate >= 0.0) {
            return Err(Error::Config("need at least one author and a non-negative rate".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    High,
    Low,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub params: FixtureParams,
    pub tweets_file: String,
    pub bars_file: String,
    pub tweets: usize,
    pub bars: usize,
    pub planted_days: usize,
    pub target_days: usize,
    pub up_days: usize,
    pub bayes_rate: f64,
    pub base_rate: f64,
    /// Regime of each target day (every bar after the first).
    pub regimes: Vec<(NaiveDate, Regime)>,
}

#[derive(Serialize)]
struct TweetRow {
    id: String,
    author_id: String,
    timestamp: String,
    text: String,
    likes: u64,
    comments: u64,
    retweets: u64,
    ticker: String,
}

#[derive(Serialize)]
struct BarRow {
    date: NaiveDate,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    volume: u64,
}

/// Scores exactly zero under both lexicons.
const NEUTRAL_PHRASES: [&str; 8] = [
    "holding {} for now",
    "anyone watching {} tonight?",
    "{} chart update",
    "{} volume looks normal",
    "checking {} after hours",
    "{} order book update",
    "who else is in {}",
    "{} evening thread",
];

/// Days an author cohort stays active.
const COHORT_DAYS: usize = 30;
/// Level the price path reverts to, and the daily pull toward it.
const PRICE_LEVEL: f64 = 100.0;
const REVERSION: f64 = 0.2;

const PHRASES: [&str; 12] = [
    "{} looking strong into the close",
    "terrible guidance from {}, selling",
    "holding {} for now",
    "{} chart is boring today",
    "great quarter for {}, love it",
    "worried about {} margins",
    "anyone watching {} tonight?",
    "{} breakout soon, bullish",
    "bad news keeps piling up for {}",
    "{} volume looks normal",
    "happy with my {} position",
    "not sure what {} does next",
];

fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Writes `<ticker>_tweets.csv`, `<ticker>_bars.csv` and `manifest.json`
/// into `outdir`. The same parameters always give byte-identical files.
pub fn generate_fixture(params: &FixtureParams, outdir: &Path) -> Result<FixtureManifest> {
    params.validate()?;
    let tz: Tz = crate::ingest::parse_tz(&params.timezone)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let dates = trading_days(params.start, params.days);
    let ticker_tag = format!("${}", params.ticker);

    // regimes and labels first, so the price path and the tweets agree
    let mut regimes = Vec::with_capacity(dates.len());
    let mut labels = Vec::with_capacity(dates.len());
    for i in 0..dates.len() {
        let regime = if i > 0 && rng.random_bool(params.planted_fraction) {
            if rng.random_bool(params.down_share) {
                Regime::Low
            } else {
                Regime::High
            }
        } else {
            Regime::Normal
        };
        let follows = rng.random_bool(params.planted_accuracy);
        let up = match regime {
            Regime::High => follows,
            Regime::Low => !follows,
            Regime::Normal => rng.random_bool(0.5),
        };
        regimes.push(regime);
        labels.push(up);
    }

    let ret = Normal::<f64>::new(0.0, 0.01).expect("valid normal");
    let gap = Normal::<f64>::new(0.0, 0.004).expect("valid normal");
    let wick = Normal::<f64>::new(0.0, 0.003).expect("valid normal");
    let vol = LogNormal::new(15.0, 0.3).expect("valid lognormal");
    let mut bars = Vec::with_capacity(dates.len());
    let mut last_close = 100.0;
    for (d, &up) in dates.iter().zip(&labels) {
        let pulled = last_close + REVERSION * (PRICE_LEVEL - last_close);
        let open = round2(pulled * (1.0 + gap.sample(&mut rng)));
        let step = ret.sample(&mut rng).abs().max(0.001);
        let mut close = round2(open * if up { 1.0 + step } else { 1.0 - step });
        if up && close <= open {
            close = round2(open + 0.01);
        }
        if !up && close >= open {
            close = round2(open - 0.01);
        }
        let high = round2(open.max(close) * (1.0 + wick.sample(&mut rng).abs()));
        let low = round2(open.min(close) * (1.0 - wick.sample(&mut rng).abs()));
        bars.push(BarRow {
            date: *d,
            open,
            high,
            low,
            close,
            volume: vol.sample(&mut rng) as u64,
        });
        last_close = close;
    }

    let background = Poisson::new(params.background_rate.max(1e-9)).expect("valid poisson");
    let engagement = LogNormal::new(3.0, 0.8).expect("valid lognormal");
    let mut tweets: Vec<TweetRow> = Vec::new();
    let mut next_id = 0usize;
    for i in 1..dates.len() {
        // window of day i opens at the previous session's 16:00 close
        let open_local = dates[i - 1].and_hms_opt(16, 0, 0).expect("valid time");
        let open = tz
            .from_local_datetime(&open_local)
            .earliest()
            .expect("16:00 exists in every zone we use");
        let cohort = i / COHORT_DAYS;
        for row in 0..ROWS {
            let at = |rng: &mut ChaCha8Rng| {
                let secs = rng.random_range(0..7200) + 7200 * row as i64;
                (open.with_timezone(&chrono::Utc) + Duration::seconds(secs))
                    .format("%Y-%m-%dT%H:%M:%SZ")
                    .to_string()
            };
            if row == 2 {
                let (lo, hi) = match regimes[i] {
                    Regime::High => params.high_volume,
                    Regime::Normal => params.normal_volume,
                    Regime::Low => params.low_volume,
                };
                let n = rng.random_range(lo..=hi) as usize;
                let total = rng.random_range(params.signal_engagement.0..=params.signal_engagement.1);
                for te in split_total(&mut rng, total, n) {
                    let (likes, comments, retweets) = split_engagement(&mut rng, te);
                    let phrase = NEUTRAL_PHRASES[rng.random_range(0..NEUTRAL_PHRASES.len())];
                    tweets.push(TweetRow {
                        id: format!("s{next_id:07}"),
                        author_id: format!("x{next_id:07}"),
                        timestamp: at(&mut rng),
                        text: phrase.replace("{}", &ticker_tag),
                        likes,
                        comments,
                        retweets,
                        ticker: params.ticker.clone(),
                    });
                    next_id += 1;
                }
                continue;
            }
            let n = background.sample(&mut rng) as usize;
            for _ in 0..n {
                let timestamp = at(&mut rng);
                let weak = rng.random_bool(params.low_engagement_share);
                let (likes, comments, retweets) = if weak {
                    (rng.random_range(0..20), rng.random_range(0..8), rng.random_range(0..8))
                } else {
                    let total = engagement.sample(&mut rng) as u64 + 40;
                    split_engagement(&mut rng, total)
                };
                // skewed pool: a few accounts post most of the time
                let u: f64 = rng.random();
                let author = ((u * u) * params.authors as f64) as usize;
                let phrase = PHRASES[rng.random_range(0..PHRASES.len())];
                tweets.push(TweetRow {
                    id: format!("s{next_id:07}"),
                    author_id: format!("u{cohort:03}_{author:03}"),
                    timestamp,
                    text: phrase.replace("{}", &ticker_tag),
                    likes,
                    comments,
                    retweets,
                    ticker: params.ticker.clone(),
                });
                next_id += 1;
            }
        }
    }
    tweets.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));

    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let tweets_file = format!("{}_tweets.csv", params.ticker);
    let bars_file = format!("{}_bars.csv", params.ticker);
    write_csv(&outdir.join(&tweets_file), &tweets)?;
    write_csv(&outdir.join(&bars_file), &bars)?;

    let manifest = FixtureManifest {
        params: params.clone(),
        tweets_file,
        bars_file,
        tweets: tweets.len(),
        bars: bars.len(),
        planted_days: regimes.iter().filter(|r| **r != Regime::Normal).count(),
        target_days: dates.len() - 1,
        up_days: labels[1..].iter().filter(|u| **u).count(),
        bayes_rate: params.bayes_rate(),
        base_rate: params.base_rate(),
        regimes: dates[1..].iter().copied().zip(regimes[1..].iter().copied()).collect(),
    };
    let path = outdir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Splits `total` into `n` parts of at least 40 each.
fn split_total(rng: &mut ChaCha8Rng, total: u64, n: usize) -> Vec<u64> {
    if n == 0 {
        return Vec::new();
    }
    let spare = total - 40 * n as u64;
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let sum: f64 = weights.iter().sum();
    let mut parts: Vec<u64> = weights.iter().map(|w| 40 + (spare as f64 * w / sum) as u64).collect();
    let used: u64 = parts.iter().sum();
    parts[0] += total - used;
    parts
}

/// Likes, comments and retweets summing to `total`.
fn split_engagement(rng: &mut ChaCha8Rng, total: u64) -> (u64, u64, u64) {
    let comments = rng.random_range(0..=total / 5);
    let retweets = rng.random_range(0..=(total - comments) / 3);
    (total - comments - retweets, comments, retweets)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> FixtureParams {
        FixtureParams {
            seed,
            days: 60,
            ..FixtureParams::default()
        }
    }

    #[test]
    fn closed_form_rates() {
        let p = FixtureParams::default();
        assert!((p.bayes_rate() - 0.7).abs() < 1e-12);
        assert!((p.base_rate() - 0.5).abs() < 1e-12);
        let literal = FixtureParams {
            down_share: 0.0,
            ..p
        };
        assert!((literal.bayes_rate() - 0.7).abs() < 1e-12);
        assert!((literal.base_rate() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn byte_identical_for_a_seed() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_fixture(&small(3), a.path()).unwrap();
        generate_fixture(&small(3), b.path()).unwrap();
        for f in ["SYN_tweets.csv", "SYN_bars.csv", "manifest.json"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let c = tempfile::tempdir().unwrap();
        generate_fixture(&small(4), c.path()).unwrap();
        assert_ne!(
            fs::read(a.path().join("SYN_tweets.csv")).unwrap(),
            fs::read(c.path().join("SYN_tweets.csv")).unwrap()
        );
    }

    #[test]
    fn planted_share_near_half() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_fixture(&FixtureParams::default(), dir.path()).unwrap();
        let n = m.target_days as f64;
        let share = m.planted_days as f64 / n;
        // four binomial standard deviations
        assert!((share - 0.5).abs() < 4.0 * (0.25 / n).sqrt(), "{share}");
        assert_eq!(m.regimes.len(), m.target_days);
    }

    #[test]
    fn signal_text_is_neutral() {
        let scorer = crate::sentiment::SentimentScorer::default();
        for p in NEUTRAL_PHRASES {
            let s = scorer.score(&p.replace("{}", "$SYN"));
            assert_eq!((s.afinn, s.vader, s.polarity), (0, 0.0, 0), "{p}");
        }
    }

    #[test]
    fn signal_bucket_totals_ignore_the_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 7, 16] {
            let parts = split_total(&mut rng, 900, n);
            assert_eq!(parts.len(), n);
            assert_eq!(parts.iter().sum::<u64>(), 900);
            assert!(parts.iter().all(|p| *p >= 40));
        }
    }

    #[test]
    fn too_few_days_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(generate_fixture(&FixtureParams { days: 9, ..small(0) }, dir.path()).is_err());
    }

    #[test]
    fn files_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_fixture(&small(5), dir.path()).unwrap();
        let tweets = crate::ingest::load_tweets(&dir.path().join(&m.tweets_file), "SYN").unwrap();
        assert!(tweets.rejects.is_empty());
        assert_eq!(tweets.tweets.len(), m.tweets);
        let bars = crate::ingest::load_bars(&dir.path().join(&m.bars_file), "SYN").unwrap();
        assert_eq!(bars.len(), 60);
    }
}
