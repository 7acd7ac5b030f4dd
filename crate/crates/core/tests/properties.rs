use c2p_core::analysis::{pairing_matrix, summarize_clusters, Trend};
use c2p_core::clustering::{align_labels, kmeans_fit, ClusterConfig};
use c2p_core::hungarian::{assignment_cost, min_cost_assignment};
use c2p_core::loss::joint_loss;
use c2p_core::metrics::{adjusted_rand_index, MetricsReport};
use c2p_core::window::{
    make_windows, window_count, AffectWindow, Attribute, RecordingAffect, RecordingFeatures, WindowConfig,
};
use c2p_core::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn enumerate_windows(t_a: usize, len: usize, hop: usize) -> usize {
    let mut n = 0;
    let mut start = 0;
    while start + len <= t_a {
        n += 1;
        start += hop;
    }
    n
}

#[test]
fn window_count_matches_enumeration() {
    for t_a in 0..=10_000 {
        assert_eq!(window_count(t_a, 50, 25), enumerate_windows(t_a, 50, 25), "T_a = {t_a}");
    }
}

proptest! {
    #[test]
    fn make_windows_covers_every_start(t_a in 0usize..400, extra in 0usize..40) {
        let cfg = WindowConfig::default();
        let frames = 2 * t_a + extra;
        let dim = 3;
        let features = RecordingFeatures::new(
            "r",
            frames.max(1),
            dim,
            (0..frames.max(1) * dim).map(|i| (i / dim) as f32).collect(),
        ).unwrap();
        let affect = RecordingAffect::new("r", Attribute::Valence, (0..t_a).map(|i| i as f32).collect()).unwrap();
        let windows = make_windows(&features, &affect, &cfg).unwrap();
        prop_assert_eq!(windows.len(), window_count(t_a, 50, 25));
        for (w, (a, s)) in windows.iter().enumerate() {
            prop_assert_eq!(a.contour[0], (w * 25) as f32);
            prop_assert_eq!(a.contour.len(), 50);
            prop_assert_eq!(s.features.len(), 99 * dim);
            // Frame index is stored as the feature value; speech starts at twice the affect index.
            let expected = ((w * 50) as f32).min((features.rows() - 1) as f32);
            prop_assert_eq!(s.features[0], expected);
        }
    }
}

/// Exhaustive minimum inertia over every labeling that uses all k clusters.
fn optimal_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        if counts.iter().all(|&c| c > 0) {
            let mut total = 0.0;
            for (p, &l) in points.iter().zip(&labels) {
                for (s, v) in sums[l].iter().zip(p) {
                    let d = v - s / counts[l] as f64;
                    total += d * d;
                }
            }
            best = best.min(total);
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn kmeans_reaches_the_exhaustive_optimum() {
    let mut hits = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 2 + (seed % 2) as usize;
        let points: Vec<Vec<f64>> = (0..8).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let m = Matrix::from_rows(&points).unwrap();
        let cfg = ClusterConfig { seed, ..ClusterConfig::with_k(k) };
        let fit = kmeans_fit(&m, &cfg, None).unwrap();
        for w in fit.inertia_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "seed {seed}: inertia rose {w:?}");
        }
        if (fit.inertia - optimal_inertia(&points, k)).abs() <= 1e-9 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "only {hits}/100 instances optimal");
}

proptest! {
    #[test]
    fn hungarian_matches_brute_force(n in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let cost = Matrix::from_rows(&rows).unwrap();
        let got = assignment_cost(&cost, &min_cost_assignment(&cost));
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permutations(&mut perm, 0, &mut |p| best = best.min(assignment_cost(&cost, p)));
        prop_assert!((got - best).abs() < 1e-9);
    }

    #[test]
    fn alignment_undoes_a_relabeling(seed in any::<u64>(), k in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<Vec<f64>> = (0..k).map(|j| vec![10.0 * j as f64, rng.random_range(-1.0..1.0)]).collect();
        let points: Vec<Vec<f64>> = (0..40)
            .map(|i| centers[i % k].iter().map(|c| c + rng.random_range(-0.1..0.1)).collect())
            .collect();
        let m = Matrix::from_rows(&points).unwrap();
        let fit = kmeans_fit(&m, &ClusterConfig::with_k(k), None).unwrap();
        let prev = Matrix::from_rows(&centers).unwrap();
        let aligned = align_labels(&prev, fit).unwrap();
        for (i, &l) in aligned.labels.iter().enumerate() {
            prop_assert_eq!(l, i % k);
        }
    }

    #[test]
    fn metrics_match_naive_reference(
        pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200)
    ) {
        let (y_true, y_pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let k = 5;
        let r = MetricsReport::from_labels(&y_true, &y_pred, k).unwrap();
        let (mut ps, mut rs, mut fs, mut m) = (0.0, 0.0, 0.0, 0.0);
        for c in 0..k {
            let tp = y_true.iter().zip(&y_pred).filter(|&(&t, &p)| t == c && p == c).count() as f64;
            let truth = y_true.iter().filter(|&&t| t == c).count() as f64;
            let pred = y_pred.iter().filter(|&&p| p == c).count() as f64;
            if truth == 0.0 {
                continue;
            }
            let p = if pred > 0.0 { tp / pred } else { 0.0 };
            let rc = tp / truth;
            ps += p;
            rs += rc;
            fs += if p + rc > 0.0 { 2.0 * p * rc / (p + rc) } else { 0.0 };
            m += 1.0;
        }
        let acc = y_true.iter().zip(&y_pred).filter(|(t, p)| t == p).count() as f64 / y_true.len() as f64;
        prop_assert!((r.accuracy - acc).abs() < 1e-12);
        prop_assert!((r.precision - ps / m).abs() < 1e-12);
        prop_assert!((r.recall - rs / m).abs() < 1e-12);
        prop_assert!((r.f_score - fs / m).abs() < 1e-12);
        prop_assert_eq!(r.samples(), y_true.len() as u64);
    }

    #[test]
    fn ari_ignores_label_names(labels in prop::collection::vec(0usize..4, 2..100), shift in 1usize..4) {
        let renamed: Vec<usize> = labels.iter().map(|l| (l + shift) % 4).collect();
        prop_assert!((adjusted_rand_index(&labels, &renamed).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_loss_identity(
        raw_a in prop::collection::vec(0.01f64..1.0, 2..8),
        raw_s in prop::collection::vec(0.01f64..1.0, 2..8),
        label in 0usize..8,
        alpha in 0.0f64..=1.0,
    ) {
        let k = raw_a.len().min(raw_s.len());
        let label = label % k;
        let norm = |v: &[f64]| { let s: f64 = v[..k].iter().sum(); v[..k].iter().map(|x| x / s).collect::<Vec<_>>() };
        let (pa, ps) = (norm(&raw_a), norm(&raw_s));
        let l = joint_loss(&pa, &ps, label, alpha).unwrap();
        prop_assert!((l.affect + pa[label].ln()).abs() < 1e-12);
        prop_assert!((l.speech + ps[label].ln()).abs() < 1e-12);
        prop_assert!((l.total - (alpha * l.affect + (1.0 - alpha) * l.speech)).abs() < 1e-12);
    }

    #[test]
    fn pairing_sums_to_one_hundred(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..300)
    ) {
        let (a, v): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let m = pairing_matrix(&a, &v, 4).unwrap();
        prop_assert!((m.total() - 100.0).abs() < 1e-9);
        for (i, j) in pairs.iter().copied() {
            prop_assert!(m.percents[i][j] > 0.0);
        }
    }

    #[test]
    fn summaries_match_direct_computation(
        rows in prop::collection::vec((prop::collection::vec(-1.0f32..1.0, 6), 0usize..3), 1..40)
    ) {
        let windows: Vec<AffectWindow> = rows.iter().enumerate()
            .map(|(i, (c, _))| AffectWindow { window_index: i, recording_id: "r".into(), contour: c.clone() })
            .collect();
        let labels: Vec<usize> = rows.iter().map(|(_, l)| *l).collect();
        let summaries = summarize_clusters(&windows, &labels, 3).unwrap();
        let occupancy: f64 = summaries.iter().map(|s| s.occupancy).sum();
        prop_assert!((occupancy - 1.0).abs() < 1e-12);
        for s in &summaries {
            let members: Vec<&Vec<f32>> = rows.iter().filter(|(_, l)| *l == s.cluster_id).map(|(c, _)| c).collect();
            prop_assert_eq!(s.members, members.len());
            if members.is_empty() {
                prop_assert!(s.trend.is_none() && s.mean_contour.is_empty());
                continue;
            }
            for p in 0..6 {
                let vals: Vec<f64> = members.iter().map(|c| c[p] as f64).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                prop_assert!((s.mean_contour[p] - mean).abs() < 1e-9);
                prop_assert!((s.std_contour[p] - var.sqrt()).abs() < 1e-9);
            }
            prop_assert_eq!(s.trend, Some(Trend::of(&s.mean_contour)));
        }
    }
}

fn permutations(p: &mut Vec<usize>, i: usize, f: &mut dyn FnMut(&[usize])) {
    if i == p.len() {
        f(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permutations(p, i + 1, f);
        p.swap(i, j);
    }
}
