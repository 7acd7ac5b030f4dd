//! Evaluation and cluster analytics: dev-set classification scores,
//! per-cluster contour summaries with trend tags, the arousal x valence
//! pairing matrix, and the within-cluster-variance sweep over k.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::clustering::{assign, kmeans_fit, ClusterConfig, ClusterModel};
use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::metrics::MetricsReport;
use crate::trainer::Checkpoint;
use crate::window::{AffectWindow, WindowedDataset};

/// Scores SpeechNet predictions against the checkpoint's own cluster
/// assignment of the dev affect windows.
pub fn evaluate(checkpoint: &Checkpoint, dataset: &WindowedDataset, k: usize) -> Result<MetricsReport> {
    checkpoint.ensure_k(k)?;
    if dataset.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let truth = checkpoint.target_labels(dataset)?;
    let predicted = checkpoint.predict(dataset)?;
    MetricsReport::from_labels(&truth, &predicted, k)
}

/// Minimum total rise (`slope * (N_a - 1)`, affect units) for a contour to
/// count as increasing or decreasing.
pub const TREND_RISE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Flat,
    Increasing,
    Decreasing,
}

impl Trend {
    pub fn of(contour: &[f64]) -> Trend {
        let rise = least_squares_slope(contour) * contour.len().saturating_sub(1) as f64;
        if rise >= TREND_RISE_THRESHOLD {
            Trend::Increasing
        } else if rise <= -TREND_RISE_THRESHOLD {
            Trend::Decreasing
        } else {
            Trend::Flat
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Trend::Flat => "flat",
            Trend::Increasing => "increasing",
            Trend::Decreasing => "decreasing",
        }
    }
}

/// Slope of the least-squares line through `(i, y_i)`.
pub fn least_squares_slope(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let mean_x = (n - 1) as f64 / 2.0;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (v - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterContourSummary {
    pub cluster_id: usize,
    pub members: usize,
    pub occupancy: f64,
    /// Empty for an unoccupied cluster.
    pub mean_contour: Vec<f64>,
    /// Population standard deviation per position.
    pub std_contour: Vec<f64>,
    /// `None` when the cluster has no members.
    pub trend: Option<Trend>,
}

pub fn summarize_clusters(
    windows: &[AffectWindow],
    labels: &[usize],
    k: usize,
) -> Result<Vec<ClusterContourSummary>> {
    if windows.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} windows but {} labels",
            windows.len(),
            labels.len()
        )));
    }
    let len = windows.first().map_or(0, |w| w.contour.len());
    let mut sums = vec![vec![0.0f64; len]; k];
    let mut counts = vec![0usize; k];
    for (w, &l) in windows.iter().zip(labels) {
        if l >= k {
            return Err(Error::LabelOutOfRange { label: l, k });
        }
        counts[l] += 1;
        for (s, &v) in sums[l].iter_mut().zip(&w.contour) {
            *s += v as f64;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.iter().map(|v| v / c.max(1) as f64).collect())
        .collect();
    let mut sq = vec![vec![0.0f64; len]; k];
    for (w, &l) in windows.iter().zip(labels) {
        for ((acc, &v), m) in sq[l].iter_mut().zip(&w.contour).zip(&means[l]) {
            let d = v as f64 - m;
            *acc += d * d;
        }
    }
    let total = windows.len().max(1) as f64;
    Ok((0..k)
        .map(|c| {
            if counts[c] == 0 {
                return ClusterContourSummary {
                    cluster_id: c,
                    members: 0,
                    occupancy: 0.0,
                    mean_contour: Vec::new(),
                    std_contour: Vec::new(),
                    trend: None,
                };
            }
            let std = sq[c].iter().map(|v| libm::sqrt(v / counts[c] as f64)).collect();
            ClusterContourSummary {
                cluster_id: c,
                members: counts[c],
                occupancy: counts[c] as f64 / total,
                trend: Some(Trend::of(&means[c])),
                mean_contour: means[c].clone(),
                std_contour: std,
            }
        })
        .collect())
}

/// `percents[a][v]`: share of windows (in percent) with arousal cluster `a`
/// and valence cluster `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingMatrix {
    pub percents: Vec<Vec<f64>>,
}

impl PairingMatrix {
    pub fn total(&self) -> f64 {
        self.percents.iter().flatten().sum()
    }
}

pub fn pairing_matrix(arousal: &[usize], valence: &[usize], k: usize) -> Result<PairingMatrix> {
    if arousal.len() != valence.len() {
        return Err(Error::Shape(format!(
            "{} arousal labels vs {} valence labels",
            arousal.len(),
            valence.len()
        )));
    }
    if arousal.is_empty() {
        return Err(Error::Config("no windows to pair".into()));
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&a, &v) in arousal.iter().zip(valence) {
        if a >= k || v >= k {
            return Err(Error::LabelOutOfRange { label: a.max(v), k });
        }
        counts[a][v] += 1;
    }
    let t = arousal.len() as f64;
    Ok(PairingMatrix {
        percents: counts
            .into_iter()
            .map(|row| row.into_iter().map(|c| 100.0 * c as f64 / t).collect())
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElbowPoint {
    pub k: usize,
    pub inertia: f64,
}

/// Best inertia for each k. Besides the cold restarts, each k > first also
/// tries the previous k's solution plus one centroid on the worst-fit point,
/// which keeps the curve non-increasing.
pub fn elbow_sweep(points: &Matrix, ks: RangeInclusive<usize>, cfg: &ClusterConfig) -> Result<Vec<ElbowPoint>> {
    let max_k = *ks.end();
    if points.rows() < max_k {
        return Err(Error::Config(format!(
            "{} points cannot form {max_k} clusters",
            points.rows()
        )));
    }
    let mut out = Vec::new();
    let mut previous: Option<ClusterModel> = None;
    for k in ks {
        let kc = ClusterConfig { k, ..cfg.clone() };
        let mut best = kmeans_fit(points, &kc, None)?;
        if let Some(prev) = &previous {
            let seeded = kmeans_fit(points, &kc, Some(&grow_centroids(points, prev)))?;
            if seeded.inertia < best.inertia {
                best = seeded;
            }
        }
        out.push(ElbowPoint {
            k,
            inertia: best.inertia,
        });
        previous = Some(best);
    }
    Ok(out)
}

fn grow_centroids(points: &Matrix, model: &ClusterModel) -> Matrix {
    let labels = assign(points, &model.centroids);
    let worst = (0..points.rows())
        .max_by(|&a, &b| {
            let da = squared_distance(points.row(a), model.centroids.row(labels[a]));
            let db = squared_distance(points.row(b), model.centroids.row(labels[b]));
            da.total_cmp(&db).then(b.cmp(&a))
        })
        .expect("non-empty");
    let mut rows = model.centroids.to_rows();
    rows.push(points.row(worst).to_vec());
    Matrix::from_rows(&rows).expect("uniform width")
}

/// The k whose step from k - 1 gives the largest relative inertia drop.
pub fn largest_relative_drop(curve: &[ElbowPoint]) -> Option<usize> {
    curve
        .windows(2)
        .filter(|w| w[0].inertia > 0.0)
        .map(|w| (w[1].k, (w[0].inertia - w[1].inertia) / w[0].inertia))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    fn window(contour: Vec<f32>) -> AffectWindow {
        AffectWindow {
            window_index: 0,
            recording_id: String::from("r"),
            contour,
        }
    }

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f32> {
        (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64) as f32).collect()
    }

    #[test]
    fn identical_contours_have_zero_std() {
        let ws = vec![window(vec![0.3; 50]); 5];
        let s = summarize_clusters(&ws, &[0; 5], 1).unwrap();
        assert!(s[0].std_contour.iter().all(|&v| v == 0.0));
        assert_eq!(s[0].trend, Some(Trend::Flat));
        assert_eq!(s[0].occupancy, 1.0);
    }

    #[test]
    fn small_ramp_is_increasing() {
        let ws = vec![window(linspace(-0.1, 0.1, 50)); 3];
        let s = summarize_clusters(&ws, &[0; 3], 1).unwrap();
        assert_eq!(s[0].trend, Some(Trend::Increasing));
        assert_eq!(Trend::of(&[0.1, 0.0, -0.1]), Trend::Decreasing);
    }

    #[test]
    fn empty_cluster_reports_no_trend() {
        let ws = vec![window(vec![0.0; 4]); 2];
        let s = summarize_clusters(&ws, &[0, 0], 3).unwrap();
        assert_eq!(s[2].occupancy, 0.0);
        assert_eq!(s[2].trend, None);
        assert!((s.iter().map(|c| c.occupancy).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_pairing_cell() {
        let p = pairing_matrix(&[1; 10], &[2; 10], 4).unwrap();
        assert_eq!(p.percents[1][2], 100.0);
        assert_eq!(p.total(), 100.0);
        assert!(pairing_matrix(&[0, 1], &[0], 4).is_err());
    }

    #[test]
    fn elbow_reaches_zero_at_n() {
        let pts = Matrix::from_rows(&[[0.0], [1.0], [3.0], [7.0]]).unwrap();
        let curve = elbow_sweep(&pts, 2..=4, &ClusterConfig::default()).unwrap();
        assert_eq!(curve.last().unwrap().inertia, 0.0);
        for w in curve.windows(2) {
            assert!(w[1].inertia <= w[0].inertia);
        }
    }
}
