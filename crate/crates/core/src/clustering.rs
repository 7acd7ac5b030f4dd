//! k-means over latent vectors: k-means++ cold starts with restarts, warm
//! starts from a previous centroid set, and Hungarian relabeling so cluster
//! identities stay stable from one epoch to the next.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hungarian::min_cost_assignment;
use crate::matrix::{squared_distance, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub k: usize,
    pub max_iterations: usize,
    /// Convergence threshold on centroid movement relative to centroid norm.
    pub tolerance: f64,
    /// Number of k-means++ initializations tried for a cold start.
    pub restarts_cold: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: 4,
            max_iterations: 300,
            tolerance: 1e-6,
            restarts_cold: 10,
            seed: 0,
        }
    }
}

impl ClusterConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.restarts_cold < 1 {
            return Err(Error::Config("restarts_cold must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Matrix,
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every assignment step of the winning run.
    #[serde(skip)]
    pub inertia_history: Vec<f64>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Nearest centroid under squared Euclidean distance; ties go to the lowest index.
pub fn assign(points: &Matrix, centroids: &Matrix) -> Vec<usize> {
    points
        .iter_rows()
        .take(points.rows())
        .map(|p| nearest(p, centroids).0)
        .collect()
}

fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter_rows().take(centroids.rows()).enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Sum of squared distances from each point to the centroid its label names.
pub fn inertia(points: &Matrix, centroids: &Matrix, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| squared_distance(points.row(i), centroids.row(l)))
        .sum()
}

pub fn kmeans_fit(
    points: &Matrix,
    cfg: &ClusterConfig,
    warm_start: Option<&Matrix>,
) -> Result<ClusterModel> {
    cfg.validate()?;
    if points.rows() < cfg.k {
        return Err(Error::Config(format!(
            "{} points cannot form {} clusters",
            points.rows(),
            cfg.k
        )));
    }
    if !points.is_finite() {
        return Err(Error::Config("points contain non-finite values".into()));
    }
    if let Some(init) = warm_start {
        if init.rows() != cfg.k || init.cols() != points.cols() {
            return Err(Error::Shape(format!(
                "warm start is {}x{}, expected {}x{}",
                init.rows(),
                init.cols(),
                cfg.k,
                points.cols()
            )));
        }
        if !init.is_finite() {
            return Err(Error::Config("warm-start centroids are not finite".into()));
        }
        return Ok(lloyd(points, init.clone(), cfg));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<ClusterModel> = None;
    for _ in 0..cfg.restarts_cold {
        let init = kmeans_plus_plus(points, cfg.k, &mut rng);
        let model = lloyd(points, init, cfg);
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// k-means++ seeding: each new center is drawn with probability proportional
/// to its squared distance from the nearest chosen center. When every point
/// already coincides with a center, the next unchosen index is used.
pub fn kmeans_plus_plus<R: Rng + ?Sized>(points: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let n = points.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc >= target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` a hair below `target`.
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("n >= k")
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

fn lloyd(points: &Matrix, mut centroids: Matrix, cfg: &ClusterConfig) -> ClusterModel {
    let k = centroids.rows();
    let mut labels = assign(points, &centroids);
    let mut history = vec![inertia(points, &centroids, &labels)];
    for _ in 0..cfg.max_iterations {
        let (mut next, counts) = means(points, &labels, &centroids);
        let repaired = repair_empty(points, &labels, &counts, &mut next);
        let mut shift = 0.0;
        let mut norm = 0.0;
        for j in 0..k {
            shift += squared_distance(next.row(j), centroids.row(j));
            norm += centroids.row(j).iter().map(|v| v * v).sum::<f64>();
        }
        centroids = next;
        let new_labels = assign(points, &centroids);
        let changed = new_labels != labels;
        labels = new_labels;
        history.push(inertia(points, &centroids, &labels));
        let has_empty = {
            let mut seen = vec![false; k];
            labels.iter().for_each(|&l| seen[l] = true);
            seen.contains(&false)
        };
        let settled = !changed || shift <= cfg.tolerance * cfg.tolerance * norm.max(f64::MIN_POSITIVE);
        if !repaired && !has_empty && settled {
            break;
        }
    }
    hartigan(points, &mut centroids, &mut labels, &mut history);
    ClusterModel {
        inertia: *history.last().expect("non-empty"),
        centroids,
        labels,
        inertia_history: history,
    }
}

/// Single-point moves on top of a Lloyd fixed point. Moving `x` from `a` to
/// `b` changes the inertia by `n_b/(n_b+1)|x-c_b|^2 - n_a/(n_a-1)|x-c_a|^2`,
/// so any negative change is taken and both means updated exactly. Every
/// partition this accepts is also a Lloyd fixed point, and it escapes many
/// of the poor ones Lloyd stalls in.
fn hartigan(points: &Matrix, centroids: &mut Matrix, labels: &mut [usize], history: &mut Vec<f64>) {
    let k = centroids.rows();
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    // Exact means of the current partition (Lloyd may have stopped one
    // update short of them).
    let (exact, _) = means(points, labels, centroids);
    *centroids = exact;
    let start = inertia(points, centroids, labels);
    if start < *history.last().expect("non-empty") {
        history.push(start);
    }
    let max_passes = 100;
    for _ in 0..max_passes {
        let mut moved = false;
        for i in 0..points.rows() {
            let a = labels[i];
            if counts[a] <= 1 {
                continue;
            }
            let x = points.row(i);
            let na = counts[a] as f64;
            let remove = na / (na - 1.0) * squared_distance(x, centroids.row(a));
            let mut best: Option<(usize, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let add = nb / (nb + 1.0) * squared_distance(x, centroids.row(b));
                if add < remove * (1.0 - 1e-12) && best.is_none_or(|(_, c)| add < c) {
                    best = Some((b, add));
                }
            }
            let Some((b, _)) = best else { continue };
            let nb = counts[b] as f64;
            for (c, &v) in centroids.row_mut(a).iter_mut().zip(x) {
                *c = (*c * na - v) / (na - 1.0);
            }
            for (c, &v) in centroids.row_mut(b).iter_mut().zip(x) {
                *c = (*c * nb + v) / (nb + 1.0);
            }
            counts[a] -= 1;
            counts[b] += 1;
            labels[i] = b;
            moved = true;
        }
        if !moved {
            break;
        }
        let (exact, _) = means(points, labels, centroids);
        *centroids = exact;
        history.push(inertia(points, centroids, labels));
    }
}

/// Per-cluster means; clusters without members keep their previous centroid
/// until [`repair_empty`] moves them.
pub(crate) fn means(points: &Matrix, labels: &[usize], previous: &Matrix) -> (Matrix, Vec<usize>) {
    let k = previous.rows();
    let dim = points.cols();
    let mut sums = Matrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, &v) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    for (j, &count) in counts.iter().enumerate() {
        if count == 0 {
            sums.row_mut(j).copy_from_slice(previous.row(j));
        } else {
            let inv = count as f64;
            sums.row_mut(j).iter_mut().for_each(|s| *s /= inv);
        }
    }
    (sums, counts)
}

/// Re-seeds every empty cluster at the point farthest from its own assigned
/// centroid (each point used at most once). Returns whether anything moved.
fn repair_empty(points: &Matrix, labels: &[usize], counts: &[usize], centroids: &mut Matrix) -> bool {
    let empty: Vec<usize> = (0..counts.len()).filter(|&j| counts[j] == 0).collect();
    if empty.is_empty() {
        return false;
    }
    let mut dist: Vec<(usize, f64)> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (i, squared_distance(points.row(i), centroids.row(l))))
        .collect();
    // Farthest first; stable on index for equal distances.
    dist.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (j, (i, _)) in empty.iter().zip(dist) {
        centroids.row_mut(*j).copy_from_slice(points.row(i));
    }
    true
}

/// Permutation `perm` such that new cluster `perm[i]` is the best match for
/// previous cluster `i` under minimum total Euclidean distance.
pub fn alignment_permutation(prev_centroids: &Matrix, new_centroids: &Matrix) -> Result<Vec<usize>> {
    if prev_centroids.rows() != new_centroids.rows() || prev_centroids.cols() != new_centroids.cols() {
        return Err(Error::Shape(format!(
            "cannot align {}x{} centroids to {}x{}",
            new_centroids.rows(),
            new_centroids.cols(),
            prev_centroids.rows(),
            prev_centroids.cols()
        )));
    }
    let k = prev_centroids.rows();
    let mut cost = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            cost.row_mut(i)[j] = libm::sqrt(squared_distance(prev_centroids.row(i), new_centroids.row(j)));
        }
    }
    Ok(min_cost_assignment(&cost))
}

/// Renumbers `model`'s clusters to match `prev_centroids`; centroid rows and
/// labels are permuted together.
pub fn align_labels(prev_centroids: &Matrix, model: ClusterModel) -> Result<ClusterModel> {
    let perm = alignment_permutation(prev_centroids, &model.centroids)?;
    let mut relabel = vec![0usize; perm.len()];
    for (target, &source) in perm.iter().enumerate() {
        relabel[source] = target;
    }
    Ok(ClusterModel {
        centroids: model.centroids.select_rows(&perm),
        labels: model.labels.iter().map(|&l| relabel[l]).collect(),
        inertia: model.inertia,
        inertia_history: model.inertia_history,
    })
}
