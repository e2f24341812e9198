//! Per-tweet sentiment indices: AFINN sum, VADER compound and the
//! {-1, 0, +1} polarity dummy derived from the compound.
//!
//! AFINN is scored on normalized-but-unstemmed tokens; VADER on the raw text,
//! since its rules need casing and punctuation.

mod vader;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::{content_tokens, Stopwords};

pub use vader::{normalize_score, Vader, VaderLexicon};

const BUNDLED_AFINN: &str = include_str!("../../data/AFINN-111.txt");

/// Default neutral band half-width for [`polarity`].
pub const DEFAULT_POLARITY_THRESHOLD: f64 = 0.05;

/// Word → integer valence in [-5, 5].
#[derive(Debug, Clone)]
pub struct AfinnLexicon(HashMap<String, i32>);

impl AfinnLexicon {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_AFINN).expect("bundled AFINN lexicon parses")
    }

    /// `word TAB integer` per line.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (word, value) = line
                .rsplit_once('\t')
                .ok_or_else(|| format!("line {}: missing tab", i + 1))?;
            let value: i32 = value
                .trim()
                .parse()
                .map_err(|e| format!("line {}: {e}", i + 1))?;
            if !(-5..=5).contains(&value) {
                return Err(format!("line {}: valence {value} outside [-5, 5]", i + 1));
            }
            map.insert(word.to_string(), value);
        }
        Ok(AfinnLexicon(map))
    }

    pub fn get(&self, word: &str) -> Option<i32> {
        self.0.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Sum of lexicon valences over the tokens; unmatched tokens add nothing.
pub fn afinn_score<S: AsRef<str>>(tokens: &[S], lexicon: &AfinnLexicon) -> i64 {
    tokens
        .iter()
        .filter_map(|t| lexicon.get(t.as_ref()))
        .map(i64::from)
        .sum()
}

/// +1 at or above `pos_threshold`, -1 at or below `-neg_threshold`, else 0.
pub fn polarity(vader: f64, pos_threshold: f64, neg_threshold: f64) -> i8 {
    if vader >= pos_threshold {
        1
    } else if vader <= -neg_threshold {
        -1
    } else {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentScores {
    pub afinn: i64,
    pub vader: f64,
    pub polarity: i8,
}

/// Lexicons, stopwords and thresholds bundled into one scorer.
#[derive(Debug, Clone)]
pub struct SentimentScorer {
    pub afinn: AfinnLexicon,
    pub vader: Vader,
    pub stopwords: Stopwords,
    pub pos_threshold: f64,
    pub neg_threshold: f64,
}

impl Default for SentimentScorer {
    fn default() -> Self {
        SentimentScorer {
            afinn: AfinnLexicon::bundled(),
            vader: Vader::default(),
            stopwords: Stopwords::english(),
            pos_threshold: DEFAULT_POLARITY_THRESHOLD,
            neg_threshold: DEFAULT_POLARITY_THRESHOLD,
        }
    }
}

impl SentimentScorer {
    pub fn score(&self, raw_text: &str) -> SentimentScores {
        let tokens = content_tokens(raw_text, &self.stopwords);
        let vader = self.vader.compound(raw_text);
        SentimentScores {
            afinn: afinn_score(&tokens, &self.afinn),
            vader,
            polarity: polarity(vader, self.pos_threshold, self.neg_threshold),
        }
    }
}
