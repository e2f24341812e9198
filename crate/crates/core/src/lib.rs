//! Daily Twitter-plus-price feature matrices for next-session direction
//! classification, a small from-scratch CNN / CNN-LSTM classifier, and
//! cell-level local-surrogate attribution of its predictions.
//!
//! Pipeline stages map onto modules:
//!
//! - [`ingest`]: tweet and OHLCV loaders, study window, engagement filter
//! - [`textprep`]: tokenizer, stopwords, Porter stemmer
//! - [`sentiment`]: AFINN, VADER compound, polarity dummy
//! - [`featurize`]: writer-score ledger, 2-hour bucketing, 12-row matrices
//! - [`nnet`]: tensors, layers with hand-written gradients, trainer
//! - [`explain`]: perturbation sampling, weighted ridge surrogate, aggregation
//! - [`harness`]: config, chronological splits, experiment grid, reports

pub mod error;
pub mod explain;
pub mod featurize;
pub mod harness;
pub mod ingest;
pub mod nnet;
pub mod sentiment;
pub mod textprep;

pub use error::{Error, Result};
