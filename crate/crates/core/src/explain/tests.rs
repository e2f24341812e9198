use super::*;
use crate::featurize::{proposed_column_names, TWEET_VOLUME_COL};

fn random_grid(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Grid {
    Grid {
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect(),
    }
}

fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 3, 4).unwrap()
}

/// Attribution of `LinearBlackBox` in mask space: coef ⊙ (x − baseline).
fn linear_truth(bb: &LinearBlackBox, x: &Grid, baseline: &Grid) -> Vec<f64> {
    bb.coef
        .data
        .iter()
        .zip(x.data.iter().zip(&baseline.data))
        .map(|(a, (v, b))| a * (v - b))
        .collect()
}

#[test]
fn mask_extremes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_grid(&mut rng, 12, 16);
    let base = random_grid(&mut rng, 12, 16);
    let s = sample_perturbations(&x, &base, &LimeSettings::default(), 3).unwrap();
    assert_eq!(s.len(), 2000);
    assert_eq!(s[0].x_perturbed, x);
    assert_eq!(s[0].similarity, 1.0);
    let none = apply_mask(&x, &base, vec![false; 192], 0.25);
    assert_eq!(none.x_perturbed, base);
    for p in &s[1..] {
        for (k, ((v, o), b)) in p.mask.iter().zip(p.x_perturbed.data.iter().zip(&x.data).zip(&base.data)) {
            assert_eq!(v, if *k { o } else { b });
        }
        assert!(p.similarity > 0.0 && p.similarity <= 1.0);
    }
    assert_eq!(s, sample_perturbations(&x, &base, &LimeSettings::default(), 3).unwrap());
}

#[test]
fn too_few_samples_is_fatal() {
    let g = Grid::zeros(12, 16);
    let settings = LimeSettings {
        n_samples: 191,
        ..LimeSettings::default()
    };
    assert!(matches!(sample_perturbations(&g, &g, &settings, 0), Err(Error::Config(_))));
}

#[test]
fn constant_black_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_grid(&mut rng, 12, 16);
    let base = Grid::zeros(12, 16);
    let s = sample_perturbations(&x, &base, &LimeSettings::default(), 4).unwrap();
    let fit = fit_surrogate(&s, &vec![0.37; s.len()], 1e-3).unwrap();
    assert!(fit.weights.iter().all(|w| w.abs() < 1e-9));
    assert!((fit.intercept - 0.37).abs() < 1e-9);
    assert_eq!(fit.fidelity_r2, 1.0);
}

#[test]
fn linear_oracle_exact_with_tiny_ridge() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_grid(&mut rng, 12, 16);
    let base = random_grid(&mut rng, 12, 16);
    let bb = LinearBlackBox {
        coef: random_grid(&mut rng, 12, 16),
        intercept: 0.2,
    };
    let settings = LimeSettings {
        ridge: 1e-12,
        ..LimeSettings::default()
    };
    let a = explain_instance(&bb, &x, &base, day(), 1, &settings, 9).unwrap();
    let truth = linear_truth(&bb, &x, &base);
    for (got, want) in a.cell_weights.data.iter().zip(&truth) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
    assert!(a.fidelity_r2 >= 0.999);
    let top = |v: &[f64]| (0..v.len()).max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs())).unwrap();
    assert_eq!(top(&a.cell_weights.data), top(&truth));
}

#[test]
fn linear_oracle_default_ridge_ranks() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_grid(&mut rng, 12, 16);
    let base = Grid::zeros(12, 16);
    let bb = LinearBlackBox {
        coef: random_grid(&mut rng, 12, 16),
        intercept: 0.0,
    };
    let a = explain_instance(&bb, &x, &base, day(), 1, &LimeSettings::default(), 1).unwrap();
    assert!(spearman(&a.cell_weights.data, &linear_truth(&bb, &x, &base)) >= 0.95);
    assert!(a.fidelity_r2 >= 0.99);
}

#[test]
fn duplicated_samples_fit_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_grid(&mut rng, 12, 16);
    let base = Grid::zeros(12, 16);
    let settings = LimeSettings {
        n_samples: 400,
        ..LimeSettings::default()
    };
    let s = sample_perturbations(&x, &base, &settings, 5).unwrap();
    let y: Vec<f64> = s.iter().map(|p| p.x_perturbed.data[..20].iter().sum::<f64>().tanh()).collect();
    let once = fit_surrogate(&s, &y, 1e-3).unwrap();
    let s2: Vec<_> = s.iter().chain(&s).cloned().collect();
    let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
    let twice = fit_surrogate(&s2, &y2, 1e-3).unwrap();
    for (a, b) in once.weights.iter().zip(&twice.weights) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn degenerate_masks_are_rejected() {
    let g = Grid::zeros(1, 2);
    let s = vec![apply_mask(&g, &g, vec![true, true], 0.25); 3];
    assert!(matches!(fit_surrogate(&s, &[0.0; 3], 1e-3), Err(Error::Numeric(_))));
}

fn single_cell(weight: f64, correct: bool) -> Attribution {
    let mut w = Grid::zeros(12, 16);
    w.set(3, TWEET_VOLUME_COL, weight);
    Attribution {
        day: day(),
        cell_weights: w,
        intercept: 0.0,
        fidelity_r2: 1.0,
        probability: 0.7,
        predicted: 1,
        correct,
    }
}

#[test]
fn single_cell_mass() {
    let names = proposed_column_names();
    let a = [single_cell(0.5, true)];
    let f = aggregate(&a, Axis::Feature, &names);
    let t = aggregate(&a, Axis::Time, &names);
    assert_eq!(f.keys.len(), 16);
    assert_eq!(t.keys.len(), 12);
    assert_eq!(f.values[TWEET_VOLUME_COL], 0.5);
    assert_eq!(f.total(), 0.5);
    assert_eq!(t.values[3], 0.5);
    assert_eq!(t.total(), 0.5);
    assert_eq!(f.ranking()[0], "tweet_volume");
}

#[test]
fn only_correct_predictions_count() {
    let names = proposed_column_names();
    let a = [single_cell(0.5, true), single_cell(-3.0, false), single_cell(0.25, true)];
    let f = aggregate(&a, Axis::Feature, &names);
    assert_eq!(f.instances, 2);
    assert_eq!(f.values[TWEET_VOLUME_COL], 0.375);
    assert!(aggregate(&[single_cell(1.0, false)], Axis::Time, &names).is_empty());
    assert!(instance_series(&[single_cell(1.0, false)]).is_empty());
}

#[test]
fn mass_conserved_across_axes() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let names = proposed_column_names();
    let atts: Vec<Attribution> = (0..7)
        .map(|i| Attribution {
            cell_weights: random_grid(&mut rng, 12, 16),
            correct: i % 3 != 0,
            ..single_cell(0.0, true)
        })
        .collect();
    let f = aggregate(&atts, Axis::Feature, &names);
    let t = aggregate(&atts, Axis::Time, &names);
    assert!((f.total() - t.total()).abs() < 1e-9);
    let series = instance_series(&atts);
    assert_eq!(series.len(), atts.iter().filter(|a| a.correct).count());
    for (row, a) in series.iter().zip(atts.iter().filter(|a| a.correct)) {
        let total: f64 = a.cell_weights.data.iter().map(|v| v.abs()).sum();
        assert!((row.values.iter().sum::<f64>() - total).abs() < 1e-12);
    }
}

/// Nonlinear model whose inputs from one column are structurally zero.
struct ColumnBlind {
    coef: Grid,
}

impl BlackBox for ColumnBlind {
    fn predict_proba(&self, x: &Grid) -> Result<f64> {
        let z: f64 = x.data.iter().zip(&self.coef.data).map(|(a, b)| a * b).sum();
        Ok(crate::nnet::layers::sigmoid(z))
    }
}

#[test]
fn ignored_column_gets_little_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let blind = 5;
    // scaled so the logit has roughly unit spread: a saturated sigmoid is
    // flat almost everywhere and leaves only noise to attribute
    let mut coef = random_grid(&mut rng, 12, 16);
    coef.data.iter_mut().for_each(|v| *v *= 0.05);
    for r in 0..12 {
        coef.set(r, blind, 0.0);
    }
    let bb = ColumnBlind { coef };
    let x = random_grid(&mut rng, 12, 16);
    let a = explain_instance(&bb, &x, &Grid::zeros(12, 16), day(), 1, &LimeSettings::default(), 2).unwrap();
    let mass = feature_mass(&a.cell_weights);
    let top = mass.iter().cloned().fold(0.0, f64::max);
    assert!(mass[blind] < 0.05 * top, "{} vs {top}", mass[blind]);
}

#[test]
fn explanation_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let bb = LinearBlackBox {
        coef: random_grid(&mut rng, 12, 16),
        intercept: 0.5,
    };
    let x = random_grid(&mut rng, 12, 16);
    let base = Grid::zeros(12, 16);
    let settings = LimeSettings {
        n_samples: 300,
        ..LimeSettings::default()
    };
    let a = explain_instance(&bb, &x, &base, day(), 0, &settings, 11).unwrap();
    let b = explain_instance(&bb, &x, &base, day(), 0, &settings, 11).unwrap();
    assert_eq!(a, b);
    assert_ne!(instance_seed(11, day()), instance_seed(11, day().succ_opt().unwrap()));
}

#[test]
fn spearman_basics() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
    assert_eq!(ranks(&[5.0, 1.0, 5.0]), [2.5, 1.0, 2.5]);
}
