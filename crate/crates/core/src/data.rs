//! Column standardization, row gathering and train/validation splits.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::seeded;

/// Per-column affine standardization `(v - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// What to do with a column whose standard deviation is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroVariance {
    Reject,
    /// Keep the column centered but unscaled.
    UnitScale,
}

impl Standardizer {
    /// Fits population mean and standard deviation over the given rows.
    pub fn fit(
        data: ArrayView2<f64>,
        rows: &[usize],
        column_prefix: &str,
        on_zero: ZeroVariance,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("no rows to fit a standardizer".into()));
        }
        let sub = data.select(Axis(0), rows);
        let mean = sub.mean_axis(Axis(0)).expect("nonempty");
        let std = sub.std_axis(Axis(0), 0.0);
        let mut std_out = Vec::with_capacity(std.len());
        for (j, &s) in std.iter().enumerate() {
            if !s.is_finite() || !mean[j].is_finite() {
                return Err(invalid(format!("column `{column_prefix}{j}` has non-finite values")));
            }
            if s <= 1e-12 * (1.0 + mean[j].abs()) {
                match on_zero {
                    ZeroVariance::Reject => {
                        return Err(Error::ZeroVariance { column: format!("{column_prefix}{j}") })
                    }
                    ZeroVariance::UnitScale => std_out.push(1.0),
                }
            } else {
                std_out.push(s);
            }
        }
        Ok(Self { mean: mean.to_vec(), std: std_out })
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(invalid("standardizer mean and std lengths differ"));
        }
        if self.std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(invalid("standardizer stds must be strictly positive"));
        }
        Ok(())
    }

    pub fn transform(&self, data: ArrayView2<f64>) -> Array2<f64> {
        let mean = Array1::from(self.mean.clone());
        let std = Array1::from(self.std.clone());
        (&data - &mean) / &std
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn inverse_in_place(&self, data: &mut Array2<f64>) {
        for mut row in data.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
    }
}

/// Shuffles `0..n` under `seed` and returns `(fit_rows, validation_rows)`.
///
/// The validation part is the last `val_fraction` of the shuffled order, with
/// at least one row on each side.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(invalid(format!("need at least 2 rows to split, got {n}")));
    }
    if !(0.0..1.0).contains(&val_fraction) || val_fraction == 0.0 {
        return Err(invalid(format!("validation fraction must be in (0, 1), got {val_fraction}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let val = order.split_off(n - n_val);
    Ok((order, val))
}
