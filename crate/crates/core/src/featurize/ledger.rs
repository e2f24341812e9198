use std::collections::HashMap;

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};
use crate::ingest::Tweet;

/// Running per-author sums of total engagement over strictly earlier posts.
///
/// Posts sharing a timestamp do not see each other: their engagement is held
/// back until a later timestamp arrives.
#[derive(Debug, Clone, Default)]
pub struct WriterScoreLedger {
    committed: HashMap<String, u64>,
    pending: Vec<(String, u64)>,
    frontier: Option<DateTime<Utc>>,
}

impl WriterScoreLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Writer score for `tweet`, then records the tweet's own engagement for
    /// later posts. Tweets must arrive in non-decreasing timestamp order.
    pub fn score(&mut self, tweet: &Tweet) -> Result<u64> {
        if let Some(frontier) = self.frontier {
            if tweet.timestamp < frontier {
                return Err(Error::LedgerOrder {
                    got: tweet.timestamp,
                    frontier,
                });
            }
            if tweet.timestamp > frontier {
                self.commit();
            }
        }
        self.frontier = Some(tweet.timestamp);
        let value = self.value(&tweet.author_id);
        self.pending
            .push((tweet.author_id.clone(), tweet.total_engagement()));
        Ok(value)
    }

    /// Current committed value for an author (0 if unseen).
    pub fn value(&self, author_id: &str) -> u64 {
        self.committed.get(author_id).copied().unwrap_or(0)
    }

    fn commit(&mut self) {
        for (author, te) in self.pending.drain(..) {
            *self.committed.entry(author).or_insert(0) += te;
        }
    }
}

/// Writer scores keyed by tweet id, from one chronological pass.
///
/// Duplicate ids (the same post listed under two tickers) count once, at
/// their first occurrence.
pub fn writer_scores(tweets: &[Tweet]) -> Result<HashMap<String, u64>> {
    let mut ordered: Vec<&Tweet> = tweets.iter().collect();
    ordered.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
    let mut ledger = WriterScoreLedger::new();
    let mut out = HashMap::with_capacity(ordered.len());
    for t in ordered {
        if out.contains_key(&t.id) {
            continue;
        }
        let ws = ledger.score(t)?;
        out.insert(t.id.clone(), ws);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_timestamp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn post(id: &str, author: &str, ts: &str, te: u64) -> Tweet {
        Tweet {
            id: id.into(),
            author_id: author.into(),
            timestamp: parse_timestamp(ts).unwrap(),
            text: String::new(),
            likes: te,
            comments: 0,
            retweets: 0,
            ticker: "AAPL".into(),
        }
    }

    #[test]
    fn exclusive_prefix_sums() {
        let mut ledger = WriterScoreLedger::new();
        let posts = [
            post("1", "a", "2019-01-01T00:00:00Z", 5),
            post("2", "a", "2019-01-01T00:00:01Z", 7),
            post("3", "a", "2019-01-01T00:00:02Z", 9),
        ];
        let scores: Vec<u64> = posts.iter().map(|p| ledger.score(p).unwrap()).collect();
        assert_eq!(scores, [0, 5, 12]);
    }

    #[test]
    fn prior_history_and_unseen_author() {
        let mut ledger = WriterScoreLedger::new();
        ledger.score(&post("1", "a", "2019-01-01T00:00:00Z", 18)).unwrap();
        ledger.score(&post("2", "a", "2019-01-02T00:00:00Z", 22)).unwrap();
        assert_eq!(ledger.score(&post("3", "a", "2019-01-03T00:00:00Z", 1)).unwrap(), 40);
        assert_eq!(ledger.score(&post("4", "b", "2019-01-03T00:00:00Z", 1)).unwrap(), 0);
    }

    #[test]
    fn out_of_order_is_fatal() {
        let mut ledger = WriterScoreLedger::new();
        ledger.score(&post("1", "a", "2019-01-02T00:00:00Z", 1)).unwrap();
        assert!(matches!(
            ledger.score(&post("2", "a", "2019-01-01T00:00:00Z", 1)),
            Err(Error::LedgerOrder { .. })
        ));
    }

    #[test]
    fn simultaneous_posts_do_not_see_each_other() {
        let mut ledger = WriterScoreLedger::new();
        assert_eq!(ledger.score(&post("1", "a", "2019-01-01T00:00:00Z", 10)).unwrap(), 0);
        assert_eq!(ledger.score(&post("2", "a", "2019-01-01T00:00:00Z", 10)).unwrap(), 0);
        assert_eq!(ledger.score(&post("3", "a", "2019-01-01T00:00:05Z", 1)).unwrap(), 20);
    }

    #[test]
    fn duplicate_ids_count_once() {
        let mut a = post("1", "a", "2019-01-01T00:00:00Z", 10);
        let mut b = a.clone();
        b.ticker = "TSLA".into();
        a.ticker = "AAPL".into();
        let c = post("2", "a", "2019-01-02T00:00:00Z", 1);
        let scores = writer_scores(&[a, b, c]).unwrap();
        assert_eq!(scores["2"], 10);
    }

    #[test]
    fn matches_brute_force_on_random_feed() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = parse_timestamp("2019-01-01T00:00:00Z").unwrap();
        let tweets: Vec<Tweet> = (0..100)
            .map(|i| {
                let mut t = post(&i.to_string(), "", "2019-01-01T00:00:00Z", 0);
                t.author_id = format!("u{}", rng.random_range(0..7));
                t.timestamp = base + chrono::Duration::minutes(rng.random_range(0..300));
                t.likes = rng.random_range(0..50);
                t.comments = rng.random_range(0..20);
                t
            })
            .collect();
        let scores = writer_scores(&tweets).unwrap();
        for t in &tweets {
            let brute: u64 = tweets
                .iter()
                .filter(|o| o.author_id == t.author_id && o.timestamp < t.timestamp)
                .map(|o| o.total_engagement())
                .sum();
            assert_eq!(scores[&t.id], brute);
        }
    }
}
