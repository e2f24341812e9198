use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tweetmatrix"));
    c.env_remove("TWEETMATRIX_DATA_DIR").env_remove("TWEETMATRIX_CONFIG").env("RUST_LOG", "warn");
    c
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

/// Small fixture plus a config trimmed to run in seconds.
fn setup(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("data");
    let out = run(bin().args(["fixture", "--days", "90", "--seed", "5", "--out"]).arg(&data));
    assert_eq!(out.status.code(), Some(0));
    for f in ["SYN_tweets.csv", "SYN_bars.csv", "manifest.json", "experiment.toml"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let cfg = dir.join("small.toml");
    std::fs::write(
        &cfg,
        r#"
tickers = ["SYN"]
start = "2017-01-02"
end = "2017-12-31"
feature_sets = ["proposed", "price_only"]
archs = ["cnn", "cnn_lstm"]
repeats = 2
l2_grid = [0.0, 0.001]
[data]
dir = "data"
[model]
epochs = 5
[explain]
n_samples = 200
"#,
    )
    .unwrap();
    cfg
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let out = tmp.path().join("out");
    let args = |sub: &str| {
        let mut c = bin();
        c.arg(sub).arg("--config").arg(&cfg).arg("--out").arg(&out);
        c
    };

    assert_eq!(run(&mut args("build-features")).status.code(), Some(0));
    let features = std::fs::read_to_string(out.join("features/SYN_proposed.jsonl")).unwrap();
    assert_eq!(features.lines().count(), 87);

    let trained = run(&mut args("train"));
    assert_eq!(trained.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&trained.stdout);
    assert!(stdout.starts_with("split,feature_set,SYN CNN,SYN CNN-LSTM"));
    for f in [
        "accuracy.csv",
        "accuracy_repeats.csv",
        "report.json",
        "feature_importance.csv",
        "time_importance.csv",
        "series_SYN.svg",
        "series_SYN.csv",
        "attributions_SYN.jsonl",
        "models/SYN_proposed_cnn.json",
        "models/SYN_price_only_cnn_lstm.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }

    assert_eq!(run(&mut args("evaluate")).status.code(), Some(0));
    // evaluating the saved best models reproduces the reported best-test repeats
    let eval = std::fs::read_to_string(out.join("evaluation.csv")).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let cell = &report["cells"][0];
    let best = cell["repeats"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["test"].as_f64().unwrap())
        .fold(f64::MIN, f64::max);
    let row = eval.lines().find(|l| l.starts_with("SYN,proposed,cnn,")).unwrap();
    let test: f64 = row.split(',').nth(5).unwrap().parse().unwrap();
    assert!((test - best).abs() < 0.006, "{row} vs {best}");

    let before = std::fs::read_to_string(out.join("feature_importance.csv")).unwrap();
    std::fs::remove_file(out.join("feature_importance.csv")).unwrap();
    assert_eq!(run(&mut args("explain")).status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(out.join("feature_importance.csv")).unwrap(), before);

    let rendered = tmp.path().join("rendered");
    let status = run(bin()
        .arg("report")
        .arg("--report")
        .arg(out.join("report.json"))
        .arg("--out")
        .arg(&rendered))
    .status;
    assert_eq!(status.code(), Some(0));
    assert_eq!(
        std::fs::read_to_string(rendered.join("accuracy.csv")).unwrap(),
        std::fs::read_to_string(out.join("accuracy.csv")).unwrap()
    );
}

#[test]
fn missing_ticker_is_partial_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace(r#"tickers = ["SYN"]"#, r#"tickers = ["SYN", "GONE"]"#)
        .replace(r#"archs = ["cnn", "cnn_lstm"]"#, r#"archs = ["cnn"]"#)
        .replace("repeats = 2", "repeats = 1");
    std::fs::write(&cfg, text).unwrap();
    let out = run(bin().arg("train").arg("--config").arg(&cfg).arg("--out").arg(tmp.path().join("o")));
    assert_eq!(out.status.code(), Some(2));
    let table = std::fs::read_to_string(tmp.path().join("o/accuracy.csv")).unwrap();
    assert!(table.lines().nth(1).unwrap().ends_with(",failed,n/a"), "{table}");
}

#[test]
fn data_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let moved = tmp.path().join("elsewhere");
    std::fs::rename(tmp.path().join("data"), &moved).unwrap();
    let args = |c: &mut Command| {
        c.arg("build-features").arg("--config").arg(&cfg).arg("--out").arg(tmp.path().join("f"));
    };
    let mut without = bin();
    args(&mut without);
    assert_eq!(run(&mut without).status.code(), Some(2));
    let mut with = bin();
    args(&mut with);
    with.env("TWEETMATRIX_DATA_DIR", &moved);
    assert_eq!(run(&mut with).status.code(), Some(0));

    // per-ticker file overrides beat the directory
    let mut per_file = bin();
    args(&mut per_file);
    per_file
        .env("TWEETMATRIX_TWEETS_SYN", moved.join("SYN_tweets.csv"))
        .env("TWEETMATRIX_BARS_SYN", moved.join("SYN_bars.csv"));
    assert_eq!(run(&mut per_file).status.code(), Some(0));
}

#[test]
fn fatal_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "split = [0.5, 0.5, 0.5]\n").unwrap();
    let out = run(bin().arg("train").arg("--config").arg(&cfg).arg("--out").arg(tmp.path()));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("split"));

    let out = run(bin().arg("report").arg("--out").arg(tmp.path().join("nothing")));
    assert_eq!(out.status.code(), Some(1));

    let out = run(bin().args(["fixture", "--days", "3", "--out"]).arg(tmp.path().join("fx")));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fixture_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = run(bin().args(["fixture", "--days", "40", "--seed", "9", "--out"]).arg(tmp.path().join(name)));
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["SYN_tweets.csv", "SYN_bars.csv", "manifest.json"] {
        assert_eq!(
            std::fs::read(tmp.path().join("a").join(f)).unwrap(),
            std::fs::read(tmp.path().join("b").join(f)).unwrap()
        );
    }
}
