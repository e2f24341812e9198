use std::path::PathBuf;

use chrono::NaiveDate;
use tweetmatrix::featurize::{self, prepare_days, writer_scores, FeatureSet, FeaturizeConfig};
use tweetmatrix::ingest::{load_bars, load_tweets, window};
use tweetmatrix::sentiment::SentimentScorer;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden").join(name)
}

/// Renders the fixture's three target days as line-JSON.
pub fn render() -> String {
    let tweets = load_tweets(&fixture("tweets.csv"), "AAPL").unwrap().tweets;
    let bars = load_bars(&fixture("bars.csv"), "AAPL").unwrap();
    let cfg = FeaturizeConfig::default();
    let tz = cfg.timezone.parse().unwrap();
    let corpus = window(
        &tweets,
        &bars,
        NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
        NaiveDate::from_ymd_opt(2019, 1, 31).unwrap(),
        tz,
    )
    .unwrap();
    let ws = writer_scores(&corpus.tweets).unwrap();
    let days = prepare_days(&corpus.tweets, &corpus.bars, &ws, &SentimentScorer::default(), &cfg)
        .unwrap();
    let instances = FeatureSet::Proposed.build_all(&days, cfg.bow_seed).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.jsonl");
    featurize::write_jsonl(&out, &instances).unwrap();
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn matrices_match_golden_bytes() {
    let expected = std::fs::read_to_string(fixture("matrices.jsonl")).unwrap();
    let got = render();
    assert_eq!(got.lines().count(), 3);
    for (g, e) in got.lines().zip(expected.lines()) {
        assert_eq!(g, e);
    }
    assert_eq!(got, expected);
}

#[test]
fn golden_round_trips() {
    let instances = featurize::read_jsonl(&fixture("matrices.jsonl")).unwrap();
    let days: Vec<String> = instances.iter().map(|i| i.day.to_string()).collect();
    assert_eq!(days, ["2019-01-07", "2019-01-08", "2019-01-09"]);
    assert_eq!(instances[1].label, 0, "flat session labels as down");
}
