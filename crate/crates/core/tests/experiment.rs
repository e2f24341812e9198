use std::path::Path;

use chrono::NaiveDate;
use tweetmatrix::featurize::FeatureSet;
use tweetmatrix::harness::{
    emit_reports, generate_fixture, load_report, mean_of, run_experiment, ExperimentConfig,
    FixtureParams, Regime, RepeatResult,
};
use tweetmatrix::nnet::Arch;

fn corpus(dir: &Path) -> ExperimentConfig {
    let params = FixtureParams {
        days: 120,
        ..FixtureParams::default()
    };
    generate_fixture(&params, dir).unwrap();
    let mut cfg = ExperimentConfig {
        tickers: vec!["SYN".into()],
        start: params.start,
        end: NaiveDate::from_ymd_opt(2017, 12, 31).unwrap(),
        feature_sets: vec![FeatureSet::PriceOnly],
        archs: vec![Arch::Cnn],
        repeats: 1,
        l2_grid: vec![1e-3],
        ..ExperimentConfig::default()
    };
    cfg.model.epochs = 10;
    cfg.explain.enabled = false;
    cfg.data.dir = dir.to_path_buf();
    cfg
}

#[test]
fn one_cell_per_combination() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = corpus(dir.path());
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.cells.len(), 1);
    let cell = &report.cells[0];
    assert!(cell.error.is_none());
    assert_eq!(cell.repeats.len(), 1);
    let [tr, va, te] = cell.sizes;
    // 120 bars leave 117 target days
    assert_eq!((tr, va, te), (81, 11, 25));
    for r in &cell.repeats {
        for v in [r.train, r.val, r.test] {
            assert!((0.0..=100.0).contains(&v));
        }
    }
}

#[test]
fn means_come_from_stored_repeats() {
    let r = |test| RepeatResult {
        seed: 0,
        train: 0.0,
        val: 0.0,
        test,
        best_epoch: 0,
    };
    assert_eq!(mean_of(&[r(60.0), r(62.0)]).unwrap().test, 61.0);
    assert!(mean_of(&[]).is_none());

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = corpus(dir.path());
    cfg.repeats = 3;
    let report = run_experiment(&cfg).unwrap();
    let cell = &report.cells[0];
    assert_eq!(cell.repeats.iter().map(|r| r.seed).collect::<Vec<_>>(), [42, 43, 44]);
    let test: f64 = cell.repeats.iter().map(|r| r.test).sum::<f64>() / 3.0;
    assert_eq!(cell.mean.as_ref().unwrap().test, test);
}

#[test]
fn failed_ticker_leaves_other_cells_alone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = corpus(dir.path());
    let alone = run_experiment(&cfg).unwrap();
    let mut with_missing = cfg.clone();
    with_missing.tickers.push("NOPE".into());
    let report = run_experiment(&with_missing).unwrap();
    assert_eq!(report.cells.len(), 2);
    assert_eq!(report.failures(), 1);
    let failed = report.cells.iter().find(|c| c.key.ticker == "NOPE").unwrap();
    assert!(failed.error.as_ref().unwrap().contains("NOPE"));
    assert!(failed.mean.is_none());
    assert_eq!(report.cells[0], alone.cells[0]);
    let tmp = tempfile::tempdir().unwrap();
    emit_reports(&report, tmp.path()).unwrap();
    let table = std::fs::read_to_string(tmp.path().join("accuracy.csv")).unwrap();
    assert!(table.contains("Price only,") && table.contains("failed"));
}

#[test]
fn explain_off_writes_accuracy_files_only() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&corpus(dir.path())).unwrap();
    assert!(report.explanations.is_empty());
    let out = tempfile::tempdir().unwrap();
    let mut names: Vec<String> = emit_reports(&report, out.path())
        .unwrap()
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["accuracy.csv", "accuracy_repeats.csv", "report.json"]);
    assert_eq!(load_report(&out.path().join("report.json")).unwrap(), report);
}

#[test]
fn explained_cell_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = corpus(dir.path());
    cfg.feature_sets = vec![FeatureSet::Proposed];
    cfg.explain.enabled = true;
    cfg.explain.lime.n_samples = 200;
    let report = run_experiment(&cfg).unwrap();
    let e = &report.explanations[0];
    assert_eq!(e.attributions.len(), report.cells[0].sizes[2]);
    if let (Some(f), Some(t)) = (&e.feature_table, &e.time_table) {
        assert_eq!(f.values.len(), 16);
        assert_eq!(t.values.len(), 12);
        assert!((f.total() - t.total()).abs() < 1e-9);
        assert_eq!(e.series.len(), f.instances);
    }
}

#[test]
fn unwritable_outdir_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&corpus(dir.path())).unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    assert!(emit_reports(&report, &file.join("sub")).is_err());
}

#[test]
fn planted_count_survives_featurization() {
    let dir = tempfile::tempdir().unwrap();
    let params = FixtureParams {
        days: 120,
        ..FixtureParams::default()
    };
    let manifest = generate_fixture(&params, dir.path()).unwrap();
    let cfg = corpus(dir.path());
    let data = tweetmatrix::harness::load_data(&cfg).unwrap();
    let days = data[0].days.as_ref().unwrap();
    for d in days {
        let regime = manifest.regimes.iter().find(|(day, _)| *day == d.day).unwrap().1;
        let (lo, hi) = match regime {
            Regime::High => params.high_volume,
            Regime::Normal => params.normal_volume,
            Regime::Low => params.low_volume,
        };
        let n = d.buckets[2].len() as u32;
        assert!((lo..=hi).contains(&n), "{} {regime:?} has {n}", d.day);
        assert!(d.buckets[2].iter().all(|t| t.writer_score == 0 && t.vader == 0.0));
    }
}
