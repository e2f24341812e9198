//! Tweet and daily-bar loaders, study-window cropping and the engagement
//! filter.
//!
//! Tweet files are either delimited text (`.csv`, `.tsv`) with a header row or
//! line-JSON (`.jsonl`, `.ndjson`, `.json`), with the columns
//! `id, author_id, timestamp, text, likes, comments, retweets, ticker`.
//! Bar files are delimited text with `date, open, high, low, close, volume`.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};

/// First day of the default study window.
pub const DEFAULT_START: (i32, u32, u32) = (2018, 6, 1);
/// Last day (inclusive) of the default study window.
pub const DEFAULT_END: (i32, u32, u32) = (2019, 12, 31);
/// Tweets with total engagement below this are dropped.
pub const DEFAULT_ENGAGEMENT_THRESHOLD: u64 = 40;
/// Fraction of malformed rows above which a tweet file is treated as a
/// schema mismatch.
pub const MAX_REJECT_RATE: f64 = 0.10;

pub fn default_window() -> (NaiveDate, NaiveDate) {
    let (sy, sm, sd) = DEFAULT_START;
    let (ey, em, ed) = DEFAULT_END;
    (
        NaiveDate::from_ymd_opt(sy, sm, sd).expect("valid date"),
        NaiveDate::from_ymd_opt(ey, em, ed).expect("valid date"),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub author_id: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    pub likes: u64,
    pub comments: u64,
    pub retweets: u64,
    pub ticker: String,
}

impl Tweet {
    /// Likes + comments + retweets.
    pub fn total_engagement(&self) -> u64 {
        self.likes + self.comments + self.retweets
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
    pub ticker: String,
}

impl PriceBar {
    fn check(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::BarSanity {
                date: self.date,
                reason,
            })
        };
        if ![self.open, self.high, self.low, self.close]
            .iter()
            .all(|v| v.is_finite())
        {
            return fail("non-finite price".into());
        }
        if self.high < self.low {
            return fail(format!("high {} < low {}", self.high, self.low));
        }
        if self.low > self.open.min(self.close) {
            return fail(format!(
                "low {} above min(open, close) {}",
                self.low,
                self.open.min(self.close)
            ));
        }
        if self.high < self.open.max(self.close) {
            return fail(format!(
                "high {} below max(open, close) {}",
                self.high,
                self.open.max(self.close)
            ));
        }
        Ok(())
    }
}

/// One malformed input row.
#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct TweetLoad {
    pub tweets: Vec<Tweet>,
    pub rejects: Vec<Reject>,
    /// Rows parsed, all tickers included.
    pub rows_seen: usize,
}

#[derive(Debug, Deserialize)]
struct RawTweet {
    id: String,
    author_id: String,
    timestamp: String,
    #[serde(default)]
    text: String,
    likes: i64,
    comments: i64,
    retweets: i64,
    ticker: String,
}

impl RawTweet {
    fn into_tweet(self) -> std::result::Result<Tweet, String> {
        let timestamp = parse_timestamp(&self.timestamp)
            .ok_or_else(|| format!("unparseable timestamp {:?}", self.timestamp))?;
        let count = |name: &str, v: i64| -> std::result::Result<u64, String> {
            u64::try_from(v).map_err(|_| format!("negative {name}: {v}"))
        };
        Ok(Tweet {
            id: self.id,
            author_id: self.author_id,
            timestamp,
            text: self.text,
            likes: count("likes", self.likes)?,
            comments: count("comments", self.comments)?,
            retweets: count("retweets", self.retweets)?,
            ticker: self.ticker.trim().to_ascii_uppercase(),
        })
    }
}

/// ISO-8601 with an offset, or a naive date-time taken as UTC, or Unix seconds.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&naive));
        }
    }
    s.parse::<i64>()
        .ok()
        .and_then(|secs| DateTime::from_timestamp(secs, 0))
}

enum TweetFormat {
    Delimited(u8),
    LineJson,
}

fn tweet_format(path: &Path) -> TweetFormat {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("jsonl" | "ndjson" | "json") => TweetFormat::LineJson,
        Some("tsv") => TweetFormat::Delimited(b'\t'),
        _ => TweetFormat::Delimited(b','),
    }
}

/// Loads the tweets of one ticker, sorted by timestamp (ties by id).
pub fn load_tweets(path: &Path, ticker: &str) -> Result<TweetLoad> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut parsed: Vec<std::result::Result<Tweet, String>> = Vec::new();
    match tweet_format(path) {
        TweetFormat::Delimited(delim) => {
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(delim)
                .has_headers(true)
                .flexible(true)
                .from_reader(file);
            for row in reader.deserialize::<RawTweet>() {
                parsed.push(match row {
                    Ok(raw) => raw.into_tweet(),
                    Err(e) => Err(e.to_string()),
                });
            }
        }
        TweetFormat::LineJson => {
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                parsed.push(
                    serde_json::from_str::<RawTweet>(&line)
                        .map_err(|e| e.to_string())
                        .and_then(RawTweet::into_tweet),
                );
            }
        }
    }
    collect_tweets(path, parsed, ticker)
}

fn collect_tweets(
    path: &Path,
    parsed: Vec<std::result::Result<Tweet, String>>,
    ticker: &str,
) -> Result<TweetLoad> {
    let ticker = ticker.trim().to_ascii_uppercase();
    let rows_seen = parsed.len();
    if rows_seen == 0 {
        warn!(path = %path.display(), "tweet file has no data rows");
        return Ok(TweetLoad::default());
    }
    let mut load = TweetLoad {
        rows_seen,
        ..TweetLoad::default()
    };
    for (i, row) in parsed.into_iter().enumerate() {
        match row {
            Ok(t) if t.ticker == ticker => load.tweets.push(t),
            Ok(_) => {}
            Err(reason) => load.rejects.push(Reject { row: i + 1, reason }),
        }
    }
    if load.rejects.len() as f64 > MAX_REJECT_RATE * rows_seen as f64 {
        return Err(Error::TooManyRejects {
            path: PathBuf::from(path),
            rejected: load.rejects.len(),
            total: rows_seen,
            first: load.rejects[0].reason.clone(),
        });
    }
    for r in &load.rejects {
        warn!(path = %path.display(), row = r.row, reason = %r.reason, "rejected tweet row");
    }
    sort_tweets(&mut load.tweets);
    Ok(load)
}

pub(crate) fn sort_tweets(tweets: &mut [Tweet]) {
    tweets.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
}

#[derive(Debug, Deserialize)]
struct RawBar {
    #[serde(alias = "Date", alias = "DATE")]
    date: String,
    #[serde(alias = "Open")]
    open: f64,
    #[serde(alias = "High")]
    high: f64,
    #[serde(alias = "Low")]
    low: f64,
    #[serde(alias = "Close")]
    close: f64,
    #[serde(alias = "Volume")]
    volume: f64,
}

/// Loads daily bars sorted by date. Duplicate dates and OHLC violations are
/// fatal: both indicate a corrupt file rather than a stray row.
pub fn load_bars(path: &Path, ticker: &str) -> Result<Vec<PriceBar>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        message: format!("row {row}: {message}"),
    };
    let mut bars = Vec::new();
    for (i, row) in reader.deserialize::<RawBar>().enumerate() {
        let raw = row.map_err(|e| parse_err(i + 1, e.to_string()))?;
        let date = NaiveDate::parse_from_str(raw.date.trim(), "%Y-%m-%d")
            .map_err(|e| parse_err(i + 1, format!("date {:?}: {e}", raw.date)))?;
        if !(raw.volume >= 0.0 && raw.volume.fract() == 0.0) {
            return Err(parse_err(i + 1, format!("bad volume {}", raw.volume)));
        }
        let bar = PriceBar {
            date,
            open: raw.open,
            high: raw.high,
            low: raw.low,
            close: raw.close,
            volume: raw.volume as u64,
            ticker: ticker.trim().to_ascii_uppercase(),
        };
        bar.check()?;
        bars.push(bar);
    }
    bars.sort_by_key(|b| b.date);
    if let Some(w) = bars.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(Error::DuplicateDate(w[0].date));
    }
    Ok(bars)
}

/// Tweets and bars cropped to one inclusive date range.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedCorpus {
    pub tweets: Vec<Tweet>,
    pub bars: Vec<PriceBar>,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// Crops both series to `[start, end]`. Tweet dates are taken in the exchange
/// timezone so the crop agrees with the bucketing clock.
pub fn window(
    tweets: &[Tweet],
    bars: &[PriceBar],
    start: NaiveDate,
    end: NaiveDate,
    tz: Tz,
) -> Result<AlignedCorpus> {
    if start > end {
        return Err(Error::Config(format!("window start {start} after end {end}")));
    }
    let in_range = |d: NaiveDate| start <= d && d <= end;
    let mut kept_tweets: Vec<Tweet> = tweets
        .iter()
        .filter(|t| in_range(t.timestamp.with_timezone(&tz).date_naive()))
        .cloned()
        .collect();
    let mut kept_bars: Vec<PriceBar> = bars.iter().filter(|b| in_range(b.date)).cloned().collect();
    if kept_tweets.is_empty() || kept_bars.is_empty() {
        return Err(Error::EmptyWindow {
            start,
            end,
            tweets: kept_tweets.len(),
            bars: kept_bars.len(),
        });
    }
    sort_tweets(&mut kept_tweets);
    kept_bars.sort_by_key(|b| b.date);
    if let Some(w) = kept_bars.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(Error::DuplicateDate(w[0].date));
    }
    Ok(AlignedCorpus {
        tweets: kept_tweets,
        bars: kept_bars,
        start,
        end,
    })
}

/// Keeps tweets whose total engagement is at least `threshold`, in order.
pub fn filter_engagement(tweets: &[Tweet], threshold: u64) -> Vec<Tweet> {
    tweets
        .iter()
        .filter(|t| t.total_engagement() >= threshold)
        .cloned()
        .collect()
}

/// Exchange timezone by IANA name (`America/New_York`, `US/Eastern`, ...).
pub fn parse_tz(name: &str) -> Result<Tz> {
    name.parse::<Tz>()
        .map_err(|e| Error::Config(format!("unknown timezone {name:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const HEADER: &str = "id,author_id,timestamp,text,likes,comments,retweets,ticker\n";

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let path = dir.path().join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    fn tweet(id: &str, ts: &str, l: u64, c: u64, rt: u64) -> Tweet {
        Tweet {
            id: id.into(),
            author_id: "a".into(),
            timestamp: parse_timestamp(ts).unwrap(),
            text: String::new(),
            likes: l,
            comments: c,
            retweets: rt,
            ticker: "AAPL".into(),
        }
    }

    fn bar(date: &str) -> PriceBar {
        PriceBar {
            date: NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap(),
            open: 10.0,
            high: 11.0,
            low: 9.0,
            close: 10.5,
            volume: 100,
            ticker: "AAPL".into(),
        }
    }

    #[test]
    fn filters_by_ticker_and_sorts() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}3,u,2019-01-03T10:00:00Z,c,1,1,1,AAPL\n\
             1,u,2019-01-01T10:00:00Z,a,1,1,1,AAPL\n\
             9,u,2019-01-02T10:00:00Z,t,1,1,1,TSLA\n\
             2,u,2019-01-02T10:00:00Z,b,1,1,1,AAPL\n"
        );
        let path = write(&dir, "t.csv", &body);
        let load = load_tweets(&path, "AAPL").unwrap();
        let ids: Vec<_> = load.tweets.iter().map(|t| t.id.as_str()).collect();
        assert_eq!(ids, ["1", "2", "3"]);
        assert!(load.rejects.is_empty());
    }

    #[test]
    fn negative_count_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = HEADER.to_string();
        for i in 0..10 {
            body.push_str(&format!("{i},u,2019-01-01T10:00:00Z,x,1,1,1,AAPL\n"));
        }
        body.push_str("bad,u,2019-01-01T10:00:00Z,x,-1,1,1,AAPL\n");
        let path = write(&dir, "t.csv", &body);
        let load = load_tweets(&path, "AAPL").unwrap();
        assert_eq!(load.tweets.len(), 10);
        assert_eq!(load.rejects.len(), 1);
        assert!(load.rejects[0].reason.contains("likes"));
    }

    #[test]
    fn reject_rate_above_limit_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}1,u,2019-01-01T10:00:00Z,x,1,1,1,AAPL\n2,u,yesterday,x,1,1,1,AAPL\n"
        );
        let path = write(&dir, "t.csv", &body);
        assert!(matches!(
            load_tweets(&path, "AAPL"),
            Err(Error::TooManyRejects { rejected: 1, total: 2, .. })
        ));
    }

    #[test]
    fn empty_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "t.csv", HEADER);
        assert!(load_tweets(&path, "AAPL").unwrap().tweets.is_empty());
        let missing = dir.path().join("nope.csv");
        assert!(matches!(load_tweets(&missing, "AAPL"), Err(Error::Io { .. })));
    }

    #[test]
    fn line_json_is_detected_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"id":"1","author_id":"u","timestamp":"2019-01-01T10:00:00-05:00","text":"hi","likes":3,"comments":0,"retweets":1,"ticker":"aapl"}
"#;
        let path = write(&dir, "t.jsonl", body);
        let load = load_tweets(&path, "AAPL").unwrap();
        assert_eq!(load.tweets.len(), 1);
        assert_eq!(load.tweets[0].timestamp, parse_timestamp("2019-01-01T15:00:00Z").unwrap());
    }

    #[test]
    fn bars_sorted_and_validated() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "b.csv",
            "date,open,high,low,close,volume\n\
             2019-01-07,1,2,0.5,1.5,10\n2019-01-03,1,2,0.5,1.5,10\n2019-01-02,1,2,0.5,1.5,10\n\
             2019-01-04,1,2,0.5,1.5,10\n2019-01-08,1,2,0.5,1.5,10\n",
        );
        let bars = load_bars(&path, "aapl").unwrap();
        assert_eq!(bars.len(), 5);
        assert!(bars.windows(2).all(|w| w[0].date < w[1].date));
        assert_eq!(bars[0].ticker, "AAPL");

        let dup = write(
            &dir,
            "d.csv",
            "date,open,high,low,close,volume\n2019-01-02,1,2,0.5,1.5,10\n2019-01-02,1,2,0.5,1.5,10\n",
        );
        assert!(matches!(load_bars(&dup, "X"), Err(Error::DuplicateDate(_))));

        let insane = write(
            &dir,
            "s.csv",
            "date,open,high,low,close,volume\n2019-01-02,100,99,98,98.5,10\n",
        );
        assert!(matches!(load_bars(&insane, "X"), Err(Error::BarSanity { .. })));
    }

    #[test]
    fn yahoo_headers_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "y.csv",
            "Date,Open,High,Low,Close,Adj Close,Volume\n2019-01-02,1,2,0.5,1.5,1.4,10\n",
        );
        assert_eq!(load_bars(&path, "X").unwrap().len(), 1);
    }

    #[test]
    fn default_window_crops_both_sides() {
        let tz: Tz = "America/New_York".parse().unwrap();
        let tweets = vec![
            tweet("a", "2017-05-01T15:00:00Z", 1, 1, 1),
            tweet("b", "2018-06-01T15:00:00Z", 1, 1, 1),
            tweet("c", "2019-12-31T15:00:00Z", 1, 1, 1),
            tweet("d", "2020-01-02T15:00:00Z", 1, 1, 1),
        ];
        let bars = vec![bar("2017-05-01"), bar("2018-06-01"), bar("2019-12-31"), bar("2020-01-02")];
        let (start, end) = default_window();
        let corpus = window(&tweets, &bars, start, end, tz).unwrap();
        let ids: Vec<_> = corpus.tweets.iter().map(|t| t.id.as_str()).collect();
        assert_eq!(ids, ["b", "c"]);
        assert_eq!(corpus.bars.len(), 2);
        let again = window(&corpus.tweets, &corpus.bars, start, end, tz).unwrap();
        assert_eq!(again, corpus);
    }

    #[test]
    fn single_day_window_and_empty_window() {
        let tz: Tz = "America/New_York".parse().unwrap();
        let tweets = vec![tweet("a", "2019-03-05T15:00:00Z", 1, 1, 1)];
        let bars = vec![bar("2019-03-05"), bar("2019-03-06")];
        let d = NaiveDate::from_ymd_opt(2019, 3, 5).unwrap();
        let corpus = window(&tweets, &bars, d, d, tz).unwrap();
        assert_eq!((corpus.tweets.len(), corpus.bars.len()), (1, 1));

        let later = NaiveDate::from_ymd_opt(2019, 4, 1).unwrap();
        assert!(matches!(
            window(&tweets, &bars, later, later, tz),
            Err(Error::EmptyWindow { bars: 0, .. })
        ));
    }

    #[test]
    fn engagement_threshold_is_inclusive() {
        let kept = tweet("k", "2019-01-01T00:00:00Z", 20, 10, 10);
        let dropped = tweet("d", "2019-01-01T00:00:00Z", 20, 10, 9);
        let xs = vec![kept.clone(), dropped.clone()];
        assert_eq!(filter_engagement(&xs, 40), vec![kept]);
        assert_eq!(filter_engagement(&xs, 0), xs);
    }

    proptest::proptest! {
        #[test]
        fn filter_idempotent(counts in proptest::collection::vec((0u64..60, 0u64..60, 0u64..60), 0..40), th in 0u64..120) {
            let xs: Vec<Tweet> = counts.iter().enumerate()
                .map(|(i, &(l, c, r))| tweet(&i.to_string(), "2019-01-01T00:00:00Z", l, c, r))
                .collect();
            let once = filter_engagement(&xs, th);
            proptest::prop_assert_eq!(filter_engagement(&once, th), once.clone());
            proptest::prop_assert!(once.iter().all(|t| t.total_engagement() >= th));
            proptest::prop_assert_eq!(filter_engagement(&xs, 0), xs);
        }
    }
}
