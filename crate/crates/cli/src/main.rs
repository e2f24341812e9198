use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing::{error, info, warn};
use tweetmatrix::featurize::{self, FeatureSet};
use tweetmatrix::harness::{
    self, cell_data, cell_keys, emit_reports, evaluate_model, explain_cell, generate_fixture,
    load_data, load_report, run_experiment_with_models, wants_explanation, CellKey,
    ExperimentConfig, FixtureParams, RunReport, TickerData,
};
use tweetmatrix::nnet::TrainedModel;
use tweetmatrix::{Error, Result};

const EXIT_FATAL: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "tweetmatrix", version, about = "Tweet feature matrices, CNN / CNN-LSTM direction models, cell attributions")]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true, env = "TWEETMATRIX_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// More logging (-v debug, -vv trace). RUST_LOG wins when set.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the feature matrices of every ticker and feature set as line-JSON.
    BuildFeatures,
    /// Run the experiment grid, save the best model per cell and write reports.
    Train,
    /// Re-score saved models on their train/validation/test blocks.
    Evaluate,
    /// Explain the test predictions of saved models.
    Explain,
    /// Re-render tables and plots from a saved report.json.
    Report {
        /// Defaults to <out>/report.json.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate the synthetic planted-signal corpus and a config that uses it.
    Fixture {
        #[arg(long, default_value_t = 400)]
        days: usize,
        #[arg(long, default_value = "SYN")]
        ticker: String,
        /// Share of planted days in the low-volume/down regime.
        #[arg(long)]
        down_share: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    match run(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            warn!(failed, "finished with failed cells");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FATAL)
        }
    }
}

/// Number of failed cells on success.
fn run(cli: &Cli) -> Result<usize> {
    if let Command::Fixture { days, ticker, down_share } = &cli.command {
        return fixture(cli, *days, ticker, *down_share);
    }
    if let Command::Report { report } = &cli.command {
        let path = report.clone().unwrap_or_else(|| cli.out.join("report.json"));
        let r = load_report(&path)?;
        emit_reports(&r, &cli.out)?;
        return Ok(r.failures());
    }
    let cfg = config(cli)?;
    match cli.command {
        Command::BuildFeatures => build_features(&cfg, &cli.out),
        Command::Train => train(&cfg, &cli.out),
        Command::Evaluate => evaluate(&cfg, &cli.out),
        Command::Explain => explain(&cfg, &cli.out),
        Command::Report { .. } | Command::Fixture { .. } => unreachable!("handled above"),
    }
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn model_path(out: &Path, key: &CellKey) -> PathBuf {
    out.join("models")
        .join(format!("{}_{}_{}.json", key.ticker, key.feature_set, key.arch))
}

fn days_for<'a>(data: &'a [TickerData], ticker: &str) -> Result<&'a [featurize::PreparedDay]> {
    let t = data
        .iter()
        .find(|d| d.ticker == ticker)
        .ok_or_else(|| Error::Config(format!("ticker {ticker} not loaded")))?;
    match &t.days {
        Ok(d) => Ok(d),
        Err(e) => Err(Error::Config(format!("data for {ticker}: {e}"))),
    }
}

fn fixture(cli: &Cli, days: usize, ticker: &str, down_share: Option<f64>) -> Result<usize> {
    let defaults = FixtureParams::default();
    let params = FixtureParams {
        seed: cli.seed.unwrap_or(defaults.seed),
        days,
        ticker: ticker.to_string(),
        down_share: down_share.unwrap_or(defaults.down_share),
        ..defaults
    };
    let manifest = generate_fixture(&params, &cli.out)?;
    let end = manifest.regimes.last().map_or(params.start, |(d, _)| *d);
    let cfg = ExperimentConfig {
        tickers: vec![ticker.to_string()],
        start: params.start,
        end,
        seed: params.seed,
        data: harness::DataConfig {
            dir: PathBuf::from("."),
            ..Default::default()
        },
        ..ExperimentConfig::default()
    };
    let path = cli.out.join("experiment.toml");
    fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))?;
    info!(
        tweets = manifest.tweets,
        bars = manifest.bars,
        planted = manifest.planted_days,
        out = %cli.out.display(),
        "fixture written"
    );
    Ok(0)
}

fn build_features(cfg: &ExperimentConfig, out: &Path) -> Result<usize> {
    let dir = out.join("features");
    create_dir(&dir)?;
    let data = load_data(cfg)?;
    let mut failed = 0;
    for t in &data {
        let days = match &t.days {
            Ok(d) => d,
            Err(e) => {
                warn!(ticker = %t.ticker, error = %e, "skipped");
                failed += cfg.feature_sets.len();
                continue;
            }
        };
        for &fs in &cfg.feature_sets {
            let path = dir.join(format!("{}_{fs}.jsonl", t.ticker));
            match fs
                .build_all(days, cfg.featurize.bow_seed)
                .and_then(|m| featurize::write_jsonl(&path, &m).map(|_| m.len()))
            {
                Ok(n) => info!(path = %path.display(), matrices = n, "written"),
                Err(e) => {
                    warn!(ticker = %t.ticker, feature_set = %fs, error = %e, "failed");
                    failed += 1;
                }
            }
        }
    }
    Ok(failed)
}

fn train(cfg: &ExperimentConfig, out: &Path) -> Result<usize> {
    let output = run_experiment_with_models(cfg)?;
    create_dir(&out.join("models"))?;
    for (key, model) in &output.models {
        model.save(&model_path(out, key))?;
    }
    emit_reports(&output.report, out)?;
    print!("{}", harness::accuracy_table(&output.report));
    Ok(output.report.failures())
}

fn evaluate(cfg: &ExperimentConfig, out: &Path) -> Result<usize> {
    let data = load_data(cfg)?;
    let mut text = String::from("ticker,feature_set,arch,train,validation,test,error\n");
    let mut failed = 0;
    for key in cell_keys(cfg) {
        let result = (|| {
            let model = TrainedModel::load(&model_path(out, &key))?;
            let days = days_for(&data, &key.ticker)?;
            let cd = cell_data(cfg, days, key.feature_set, key.arch, Some(&model.scaler))?;
            evaluate_model(&model, &cd)
        })();
        let row = match result {
            Ok(r) => format!("{:.2},{:.2},{:.2},", r.train, r.val, r.test),
            Err(e) => {
                warn!(cell = %key, error = %e, "evaluation failed");
                failed += 1;
                format!(",,,\"{}\"", e.to_string().replace('"', "'"))
            }
        };
        text.push_str(&format!("{},{},{},{row}\n", key.ticker, key.feature_set, key.arch));
    }
    create_dir(out)?;
    let path = out.join("evaluation.csv");
    fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    print!("{text}");
    Ok(failed)
}

fn explain(cfg: &ExperimentConfig, out: &Path) -> Result<usize> {
    let mut cfg = cfg.clone();
    cfg.explain.enabled = true;
    let data = load_data(&cfg)?;
    let report_path = out.join("report.json");
    let mut report = if report_path.exists() {
        load_report(&report_path)?
    } else {
        RunReport {
            seed: cfg.seed,
            repeats: cfg.repeats,
            tickers: cfg.tickers.clone(),
            cells: Vec::new(),
            explanations: Vec::new(),
        }
    };
    let mut explanations = Vec::new();
    let mut failed = 0;
    for key in cell_keys(&cfg).into_iter().filter(|k| wants_explanation(&cfg, k)) {
        let repeat = report
            .cells
            .iter()
            .find(|c| c.key == key)
            .and_then(|c| c.best_repeat())
            .unwrap_or(0);
        let prepared = (|| {
            let model = TrainedModel::load(&model_path(out, &key))?;
            let days = days_for(&data, &key.ticker)?;
            let cd = cell_data(&cfg, days, key.feature_set, key.arch, Some(&model.scaler))?;
            Ok::<_, Error>((model, cd))
        })();
        match prepared {
            Ok((model, cd)) => {
                let e = explain_cell(&cfg, &key, repeat, &model, &cd);
                failed += usize::from(e.error.is_some());
                explanations.push(e);
            }
            Err(e) => {
                warn!(cell = %key, error = %e, "cannot explain");
                failed += 1;
            }
        }
    }
    if explanations.is_empty() && failed == 0 {
        return Err(Error::Config("no cell selected for explanation".into()));
    }
    report.explanations = explanations;
    emit_reports(&report, out)?;
    if let Some(e) = report.explanations.iter().find(|e| e.key.feature_set == FeatureSet::Proposed) {
        if let Some(t) = &e.feature_table {
            info!(ticker = %e.key.ticker, top = ?&t.ranking()[..3], "feature ranking");
        }
    }
    Ok(failed)
}
