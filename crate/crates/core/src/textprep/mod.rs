//! Tweet text normalization: lowercase, tokenize, drop stopwords, stem.
//!
//! Each whitespace-delimited chunk yields at most one token. URLs and
//! `@mentions` are dropped, `#` and `$` prefixes are stripped so hashtag and
//! cashtag words survive, and every remaining non-alphanumeric character
//! (punctuation, emoji) is deleted.

mod porter;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use porter::stem;

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// The bundled 179-word English list.
    pub fn english() -> Self {
        Self::parse(BUNDLED_STOPWORDS)
    }

    pub fn empty() -> Self {
        Stopwords(HashSet::new())
    }

    /// One word per line, UTF-8. Blank lines are ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Stopwords(
            words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    fn parse(text: &str) -> Self {
        Self::from_words(text.lines())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Self::english()
    }
}

/// Ordered lowercase tokens with no stopwords and no punctuation.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenList {
    pub tokens: Vec<String>,
}

impl TokenList {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

fn is_url(chunk: &str) -> bool {
    chunk.starts_with("http://") || chunk.starts_with("https://") || chunk.starts_with("www.")
}

fn clean_chunk(chunk: &str) -> Option<String> {
    if is_url(chunk) || chunk.starts_with('@') {
        return None;
    }
    let chunk = chunk.trim_start_matches(['#', '$']);
    let kept: String = chunk
        .chars()
        .map(|c| if c == '\u{2019}' { '\'' } else { c })
        .filter(|c| c.is_alphanumeric() || *c == '\'')
        .collect();
    let kept = kept.trim_matches('\'');
    if kept.chars().any(char::is_alphanumeric) {
        Some(kept.to_string())
    } else {
        None
    }
}

/// Lowercased, cleaned, stopword-free tokens before stemming. AFINN lookups
/// run on this stream, since lexicon keys are whole words.
pub fn content_tokens(text: &str, stopwords: &Stopwords) -> Vec<String> {
    let lower = text.to_lowercase();
    lower
        .split_whitespace()
        .filter_map(clean_chunk)
        .filter(|t| !stopwords.contains(t))
        .filter_map(|t| {
            let bare = t.strip_suffix("'s").unwrap_or(&t).replace('\'', "");
            (!bare.is_empty() && !stopwords.contains(&bare)).then_some(bare)
        })
        .collect()
}

/// Full normalization: [`content_tokens`] followed by Porter stemming.
pub fn normalize(text: &str, stopwords: &Stopwords) -> TokenList {
    TokenList {
        tokens: content_tokens(text, stopwords)
            .iter()
            .map(|t| stem(t))
            .collect(),
    }
}
