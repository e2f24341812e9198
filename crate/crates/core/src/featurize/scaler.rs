use serde::{Deserialize, Serialize};

use super::Grid;
use crate::error::{Error, Result};

/// Columns with a training std below this pass through unscaled.
pub const MIN_STD: f64 = 1e-12;

/// Per-column z-scoring fitted over every row of every training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// A matrix that has been through exactly one [`Scaler::apply`]. Carries the
/// fingerprint of the scaler that produced it so a model can refuse input
/// scaled by someone else's statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledGrid {
    grid: Grid,
    fingerprint: u64,
}

impl ScaledGrid {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Same provenance, new values. Used by perturbation-based explainers
    /// that edit cells of an already scaled matrix.
    pub fn with_values(&self, data: Vec<f64>) -> Result<ScaledGrid> {
        if data.len() != self.grid.data.len() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                self.grid.data.len(),
                data.len()
            )));
        }
        Ok(ScaledGrid {
            grid: Grid {
                rows: self.grid.rows,
                cols: self.grid.cols,
                data,
            },
            fingerprint: self.fingerprint,
        })
    }
}

impl Scaler {
    pub fn fit<'a>(matrices: impl IntoIterator<Item = &'a Grid>) -> Result<Scaler> {
        let mut iter = matrices.into_iter().peekable();
        let cols = iter
            .peek()
            .map(|g| g.cols)
            .ok_or_else(|| Error::Shape("cannot fit a scaler on zero matrices".into()))?;
        let mut n = 0usize;
        let mut sum = vec![0.0; cols];
        let mut sq = vec![0.0; cols];
        let mut seen = Vec::new();
        for g in iter {
            if g.cols != cols {
                return Err(Error::Shape(format!("mixed widths {cols} and {}", g.cols)));
            }
            for r in 0..g.rows {
                for (c, &v) in g.row(r).iter().enumerate() {
                    sum[c] += v;
                }
            }
            n += g.rows;
            seen.push(g);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for g in &seen {
            for r in 0..g.rows {
                for (c, &v) in g.row(r).iter().enumerate() {
                    sq[c] += (v - mean[c]).powi(2);
                }
            }
        }
        let std = sq.iter().map(|s| (s / n as f64).sqrt()).collect();
        Ok(Scaler { mean, std })
    }

    pub fn cols(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, grid: &Grid) -> Result<ScaledGrid> {
        if grid.cols != self.cols() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} columns, matrix has {}",
                self.cols(),
                grid.cols
            )));
        }
        let mut out = grid.clone();
        for r in 0..out.rows {
            for c in 0..out.cols {
                let v = out.get(r, c);
                if self.std[c] >= MIN_STD {
                    out.set(r, c, (v - self.mean[c]) / self.std[c]);
                }
            }
        }
        Ok(ScaledGrid {
            grid: out,
            fingerprint: self.fingerprint(),
        })
    }

    /// FNV-1a over the bit patterns of every mean and std.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.mean.iter().chain(self.std.iter()) {
            for b in v.to_bits().to_le_bytes() {
                h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> Grid {
        Grid {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    #[test]
    fn z_scores_and_constant_columns() {
        let g = Grid::from_rows(&[vec![8.0, 3.0], vec![12.0, 3.0]]).unwrap();
        let s = Scaler::fit([&g]).unwrap();
        assert_eq!(s.mean, [10.0, 3.0]);
        assert_eq!(s.std, [2.0, 0.0]);
        let out = s.apply(&Grid::from_rows(&[vec![12.0, 3.0]]).unwrap()).unwrap();
        assert_eq!(out.grid().data, [1.0, 3.0]);
    }

    #[test]
    fn applying_twice_differs_from_once() {
        let s = Scaler::fit([&col(&[1.0, 5.0, 9.0])]).unwrap();
        let once = s.apply(&col(&[9.0])).unwrap();
        let twice = s.apply(once.grid()).unwrap();
        assert_ne!(once.grid().data, twice.grid().data);
    }

    #[test]
    fn fingerprint_tracks_statistics() {
        let a = Scaler::fit([&col(&[1.0, 2.0])]).unwrap();
        let b = Scaler::fit([&col(&[1.0, 3.0])]).unwrap();
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.apply(&col(&[0.0])).unwrap().fingerprint(), a.fingerprint());
    }

    #[test]
    fn shift_of_a_column_is_absorbed() {
        let base = [1.0, 4.0, 2.0, 8.0];
        let shifted: Vec<f64> = base.iter().map(|v| v + 100.0).collect();
        let a = Scaler::fit([&col(&base)]).unwrap();
        let b = Scaler::fit([&col(&shifted)]).unwrap();
        let za = a.apply(&col(&base)).unwrap();
        let zb = b.apply(&col(&shifted)).unwrap();
        for (x, y) in za.grid().data.iter().zip(&zb.grid().data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_fit_and_width_mismatch() {
        assert!(Scaler::fit(std::iter::empty::<&Grid>()).is_err());
        let s = Scaler::fit([&col(&[1.0])]).unwrap();
        assert!(s.apply(&Grid::zeros(1, 2)).is_err());
    }
}
