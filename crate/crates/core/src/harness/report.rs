use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::{Explanation, RunReport};
use crate::error::{Error, Result};
use crate::explain::write_attributions;
use crate::featurize::{FeatureSet, ROW_TIMES};
use crate::nnet::Arch;

/// Row order of the accuracy table; `None` rows are benchmarks this crate
/// does not implement and render as "n/a".
pub const ACCURACY_ROWS: [(&str, Option<FeatureSet>); 9] = [
    ("Proposed feature matrix", Some(FeatureSet::Proposed)),
    ("BOW 8", Some(FeatureSet::Bow8)),
    ("BOW 16", Some(FeatureSet::Bow16)),
    ("BOW 24", Some(FeatureSet::Bow24)),
    ("DOC2VEC 8", None),
    ("DOC2VEC 16", None),
    ("DOC2VEC 24", None),
    ("Sentiment + Price", Some(FeatureSet::SentimentPrice)),
    ("Price only", Some(FeatureSet::PriceOnly)),
];

pub const SPLITS: [&str; 3] = ["test", "validation", "train"];

/// 16:00 close to 08:00 is outside the session.
pub fn period_label(row: usize) -> String {
    let status = if row < 8 { "Market Closed" } else { "Market Open" };
    format!("{} ({status})", ROW_TIMES[row])
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Three blocks (test, validation, train) of one row per feature set and a
/// (CNN, CNN-LSTM) column pair per ticker, mean accuracy in percent.
pub fn accuracy_table(report: &RunReport) -> String {
    let mut out = String::from("split,feature_set");
    for t in &report.tickers {
        for arch in Arch::ALL {
            let _ = write!(out, ",{}", csv_field(&format!("{t} {}", arch_label(arch))));
        }
    }
    out.push('\n');
    for split in SPLITS {
        for (label, fs) in ACCURACY_ROWS {
            let _ = write!(out, "{split},{}", csv_field(label));
            for t in &report.tickers {
                for arch in Arch::ALL {
                    let cell = fs.and_then(|fs| report.cell(t, fs, arch));
                    let v = match cell {
                        None => "n/a".to_string(),
                        Some(c) if c.error.is_some() => "failed".to_string(),
                        Some(c) => c
                            .mean
                            .as_ref()
                            .map(|m| match split {
                                "test" => m.test,
                                "validation" => m.val,
                                _ => m.train,
                            })
                            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}")),
                    };
                    let _ = write!(out, ",{v}");
                }
            }
            out.push('\n');
        }
    }
    out
}

fn arch_label(arch: Arch) -> &'static str {
    match arch {
        Arch::Cnn => "CNN",
        Arch::CnnLstm => "CNN-LSTM",
    }
}

/// Every training run of every cell.
pub fn repeats_table(report: &RunReport) -> String {
    let mut out = String::from("ticker,feature_set,arch,repeat,seed,l2,best_epoch,train,validation,test,error\n");
    for c in &report.cells {
        let k = &c.key;
        if let Some(e) = &c.error {
            let _ = writeln!(out, "{},{},{},,,,,,,,{}", csv_field(&k.ticker), k.feature_set, k.arch, csv_field(e));
            continue;
        }
        for (i, r) in c.repeats.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{i},{},{},{},{:.4},{:.4},{:.4},",
                csv_field(&k.ticker),
                k.feature_set,
                k.arch,
                r.seed,
                c.l2.unwrap_or(f64::NAN),
                r.best_epoch,
                r.train,
                r.val,
                r.test
            );
        }
    }
    out
}

/// Explanations of the proposed-matrix CNN, one per ticker in report order.
fn headline_explanations(report: &RunReport) -> Vec<(&str, Option<&Explanation>)> {
    report
        .tickers
        .iter()
        .map(|t| {
            let e = report.explanations.iter().find(|e| {
                e.key.ticker == *t && e.key.feature_set == FeatureSet::Proposed && e.key.arch == Arch::Cnn
            });
            (t.as_str(), e)
        })
        .collect()
}

fn importance_table(keys: &[String], cols: &[(&str, Option<&Explanation>)], time: bool) -> String {
    let mut out = String::from(if time { "period" } else { "feature" });
    for (t, _) in cols {
        let _ = write!(out, ",{}", csv_field(t));
    }
    out.push('\n');
    for (i, key) in keys.iter().enumerate() {
        out.push_str(&csv_field(key));
        for (_, e) in cols {
            let table = e.and_then(|e| if time { e.time_table.as_ref() } else { e.feature_table.as_ref() });
            match table {
                Some(tab) => {
                    let _ = write!(out, ",{:.4}", tab.values[i]);
                }
                None => out.push_str(",n/a"),
            }
        }
        out.push('\n');
    }
    out
}

/// Mean absolute attribution per feature (rows) and ticker (columns).
pub fn feature_importance_table(report: &RunReport) -> String {
    let keys = FeatureSet::Proposed.column_names();
    importance_table(&keys, &headline_explanations(report), false)
}

/// Mean absolute attribution per 2-hour period (rows) and ticker (columns).
pub fn time_importance_table(report: &RunReport) -> String {
    let keys: Vec<String> = (0..ROW_TIMES.len()).map(period_label).collect();
    importance_table(&keys, &headline_explanations(report), true)
}

/// Day plus one column of attribution mass per feature, correct predictions
/// only.
pub fn series_table(e: &Explanation) -> String {
    let mut out = String::from("day");
    for n in &e.column_names {
        let _ = write!(out, ",{}", csv_field(n));
    }
    out.push('\n');
    for row in &e.series {
        let _ = write!(out, "{}", row.day);
        for v in &row.values {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}

const PALETTE: [&str; 16] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#637939", "#8c6d31", "#843c39", "#7b4173", "#000000",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line plot of the instance series: one polyline per feature, with a legend.
pub fn series_svg(e: &Explanation) -> String {
    let (w, h) = (900.0, 420.0);
    let (left, right, top, bottom) = (60.0, 190.0, 30.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let n = e.series.len();
    let ymax = e
        .series
        .iter()
        .flat_map(|r| r.values.iter().copied())
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let x_at = |i: usize| left + if n > 1 { pw * i as f64 / (n - 1) as f64 } else { pw / 2.0 };
    let y_at = |v: f64| top + ph * (1.0 - v / ymax);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="18" font-size="13">{} {} {}: attribution mass per feature, correct predictions</text>"#,
        xml_escape(&e.key.ticker),
        e.key.feature_set,
        e.key.arch
    );
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for k in 0..=4 {
        let v = ymax * k as f64 / 4.0;
        let y = y_at(v);
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text><line x1="{left}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/>"##,
            left - 6.0,
            y + 4.0,
            left + pw
        );
    }
    if let (Some(first), Some(last)) = (e.series.first(), e.series.last()) {
        let y = top + ph + 18.0;
        let _ = writeln!(s, r#"<text x="{left}" y="{y}">{}</text>"#, first.day);
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, left + pw, last.day);
    }
    for (f, name) in e.column_names.iter().enumerate() {
        let points: Vec<String> = e
            .series
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{:.1},{:.1}", x_at(i), y_at(r.values[f])))
            .collect();
        let color = PALETTE[f % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<polyline data-feature="{}" fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            xml_escape(name),
            points.join(" ")
        );
        let ly = top + 12.0 + 14.0 * f as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn cell_stem(e: &Explanation) -> String {
    let k = &e.key;
    if k.feature_set == FeatureSet::Proposed && k.arch == Arch::Cnn {
        k.ticker.clone()
    } else {
        format!("{}_{}_{}", k.ticker, k.feature_set, k.arch)
    }
}

/// Writes every report file into `outdir` and returns their paths.
///
/// Always: `accuracy.csv`, `accuracy_repeats.csv`, `report.json`. With
/// explanations: `feature_importance.csv`, `time_importance.csv`, and per
/// explained cell `series_<stem>.csv`, `series_<stem>.svg` and
/// `attributions_<stem>.jsonl`.
pub fn emit_reports(report: &RunReport, outdir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        let p = outdir.join(name);
        write(&p, &text)?;
        written.push(p);
        Ok(())
    };
    put("accuracy.csv".into(), accuracy_table(report))?;
    put("accuracy_repeats.csv".into(), repeats_table(report))?;
    put("report.json".into(), serde_json::to_string(report)? + "\n")?;
    if report.explanations.iter().any(|e| e.feature_table.is_some()) {
        put("feature_importance.csv".into(), feature_importance_table(report))?;
        put("time_importance.csv".into(), time_importance_table(report))?;
    }
    let mut extra = Vec::new();
    for e in &report.explanations {
        if e.error.is_some() {
            continue;
        }
        let stem = cell_stem(e);
        put(format!("series_{stem}.csv"), series_table(e))?;
        put(format!("series_{stem}.svg"), series_svg(e))?;
        let p = outdir.join(format!("attributions_{stem}.jsonl"));
        write_attributions(&p, &e.attributions)?;
        extra.push(p);
    }
    written.extend(extra);
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
