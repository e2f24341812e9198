//! Experiment configuration, chronological splits, the repeated-run grid of
//! tickers × feature sets × architectures, report files, and the synthetic
//! planted-signal corpus.

mod config;
mod experiment;
mod fixture;
mod report;
mod split;

pub use config::{
    DataConfig, DataFiles, ExperimentConfig, ExplainConfig, ENV_BARS_PREFIX, ENV_DATA_DIR,
    ENV_TWEETS_PREFIX,
};
pub use experiment::{
    build_examples, cell_data, cell_keys, evaluate_model, explain_cell, load_data, mean_of, run_experiment,
    run_experiment_with_models, scale_examples, CellData, CellKey, CellResult, ExperimentOutput,
    Explanation, Means, RawExample, RepeatResult, RunReport, TickerData, wants_explanation,
};
pub use fixture::{generate_fixture, FixtureManifest, FixtureParams, Regime};
pub use report::{
    accuracy_table, emit_reports, feature_importance_table, load_report, period_label,
    repeats_table, series_svg, series_table, time_importance_table, ACCURACY_ROWS, SPLITS,
};
pub use split::split_chronological;
