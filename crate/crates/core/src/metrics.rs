//! Evaluation metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.is_empty() || truth.is_empty() {
        return Err(Error::Empty("metric input".into()));
    }
    if pred.len() != truth.len() {
        return Err(mismatch(format!("{} predictions vs {} targets", pred.len(), truth.len())));
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Mean absolute deviation between predictions and targets.
pub fn mad(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::Empty("metric input".into()));
    }
    if pred.len() != truth.len() {
        return Err(mismatch(format!("{} predictions vs {} targets", pred.len(), truth.len())));
    }
    Ok(pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64)
}

/// Unweighted Cohen's kappa, `(p_o - p_e) / (1 - p_e)`; 0 when `p_e == 1`.
pub fn kappa(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let p_o = accuracy(pred, truth)?;
    let k = pred.iter().chain(truth).max().copied().unwrap_or(0) + 1;
    let n = pred.len() as f64;
    let mut a = vec![0.0; k];
    let mut b = vec![0.0; k];
    for (&p, &t) in pred.iter().zip(truth) {
        a[p] += 1.0;
        b[t] += 1.0;
    }
    let p_e: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / (n * n);
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(0.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Total-variation distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(mismatch("distributions have different support sizes"));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Empirical label frequencies over `0..k`.
pub fn label_frequencies(labels: &[usize], k: usize) -> Vec<f64> {
    let mut f = vec![0.0; k];
    for &l in labels {
        if l < k {
            f[l] += 1.0;
        }
    }
    let n = labels.len().max(1) as f64;
    f.iter_mut().for_each(|v| *v /= n);
    f
}

/// Wasserstein-1 distance between two 1-D empirical distributions.
///
/// Computed as the integral of `|F_a^{-1}(u) - F_b^{-1}(u)|` over `u` in
/// `[0, 1]`, walking the merged breakpoints `i / n_a` and `j / n_b`; exact for
/// unequal sizes.
pub fn wasserstein1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("wasserstein sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        return Ok(s / a.len() as f64);
    }
    let (na, nb) = (a.len(), b.len());
    // quantile levels are compared as integers on the common grid 1 / (na * nb)
    let (mut i, mut j) = (0usize, 0usize);
    let mut level = 0u128;
    let mut total = 0.0;
    let (na_u, nb_u) = (na as u128, nb as u128);
    while i < na && j < nb {
        let next_a = (i as u128 + 1) * nb_u;
        let next_b = (j as u128 + 1) * na_u;
        let next = next_a.min(next_b);
        total += (next - level) as f64 * (a[i] - b[j]).abs();
        level = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok(total / (na_u * nb_u) as f64)
}

/// Metric values keyed by quantile level plus their average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub sample_count: usize,
    /// `(alpha, value)` in ascending alpha order.
    pub per_level: Vec<(f64, f64)>,
    pub average: f64,
}

impl MetricReport {
    pub fn new(metric: impl Into<String>, sample_count: usize, per_level: Vec<(f64, f64)>) -> Result<Self> {
        if per_level.is_empty() {
            return Err(Error::Empty("metric report levels".into()));
        }
        let mut per_level = per_level;
        per_level.sort_by(|x, y| x.0.total_cmp(&y.0));
        let average = per_level.iter().map(|(_, v)| v).sum::<f64>() / per_level.len() as f64;
        Ok(Self { metric: metric.into(), sample_count, per_level, average })
    }

    pub fn value_at(&self, alpha: f64) -> Option<f64> {
        self.per_level.iter().find(|(a, _)| (a - alpha).abs() < 1e-12).map(|(_, v)| *v)
    }

    pub fn as_map(&self) -> BTreeMap<String, f64> {
        let mut m: BTreeMap<String, f64> =
            self.per_level.iter().map(|(a, v)| (format_level(*a), *v)).collect();
        m.insert("Average".into(), self.average);
        m
    }
}

/// `0.05 -> "5%"`.
pub fn format_level(alpha: f64) -> String {
    let pct = alpha * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}%", pct.round() as i64)
    } else {
        format!("{pct}%")
    }
}
