//! Classification metrics with macro averaging, plus the adjusted Rand index
//! used to score recovered clusters against planted ones.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Macro-averaged over classes present in the ground truth.
    pub precision: f64,
    pub recall: f64,
    /// Mean of the per-class F1 scores.
    pub f_score: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<u64>>,
    /// Ground-truth count per class.
    pub support: Vec<u64>,
}

impl MetricsReport {
    pub fn from_labels(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::Shape(format!(
                "{} ground-truth labels vs {} predictions",
                y_true.len(),
                y_pred.len()
            )));
        }
        if y_true.is_empty() {
            return Err(Error::Config("cannot score an empty label set".into()));
        }
        let mut confusion = vec![vec![0u64; k]; k];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            let bad = if t >= k { Some(t) } else if p >= k { Some(p) } else { None };
            if let Some(label) = bad {
                return Err(Error::LabelOutOfRange { label, k });
            }
            confusion[t][p] += 1;
        }
        let support: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
        let predicted: Vec<u64> = (0..k).map(|c| confusion.iter().map(|r| r[c]).sum()).collect();
        let correct: u64 = (0..k).map(|c| confusion[c][c]).sum();

        let mut present = 0usize;
        let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
        for c in 0..k {
            if support[c] == 0 {
                continue;
            }
            present += 1;
            let tp = confusion[c][c] as f64;
            let precision = if predicted[c] > 0 { tp / predicted[c] as f64 } else { 0.0 };
            let recall = tp / support[c] as f64;
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            p_sum += precision;
            r_sum += recall;
            f_sum += f1;
        }
        let m = present as f64;
        Ok(Self {
            accuracy: correct as f64 / y_true.len() as f64,
            precision: p_sum / m,
            recall: r_sum / m,
            f_score: f_sum / m,
            confusion,
            support,
        })
    }

    pub fn samples(&self) -> u64 {
        self.support.iter().sum()
    }
}

fn pairs(n: u64) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("labelings have {} and {} items", a.len(), b.len())));
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&n| pairs(n)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| pairs(table.iter().map(|r| r[j]).sum())).sum();
    let total = pairs(a.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        // Both labelings are trivial (all-one-cluster or all-singletons).
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
