//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use c2p::checkpoint::load_checkpoint;
use c2p::commands::{self, Overrides};
use c2p::config::ExperimentConfig;
use c2p::manifest::Manifest;
use c2p::outputs::{self, read_csv_rows};
use c2p_core::analysis::{elbow_sweep, largest_relative_drop, pairing_matrix};
use c2p_core::baselines::BaselineKind;
use c2p_core::clustering::{kmeans_fit, ClusterConfig};
use c2p_core::gradcheck::GradProblem;
use c2p_core::loss::joint_loss;
use c2p_core::metrics::{adjusted_rand_index, MetricsReport};
use c2p_core::speechnet::{SpeechArch, SpeechNet, SpeechNetConfig};
use c2p_core::synth::SynthSpec;
use c2p_core::trainer::Checkpoint;
use c2p_core::window::{make_windows, window_count, Attribute, RecordingAffect, RecordingFeatures, Split, WindowConfig};
use c2p_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = anyhow::Result<(bool, String)>;

/// A synthetic dataset plus one training run on it, driven through the same
/// library calls as the CLI.
struct Run {
    dir: PathBuf,
    cfg: ExperimentConfig,
    checkpoint: Checkpoint,
    elapsed: Duration,
}

fn synth_config(root: &Path, seed: u64, spec: SynthSpec) -> anyhow::Result<ExperimentConfig> {
    let cfg = ExperimentConfig {
        output_dir: root.to_path_buf(),
        seed,
        synth: spec,
        ..ExperimentConfig::default()
    };
    let path = commands::synth(&cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
    commands::load_config(Some(&path), &Overrides::default()).map_err(|e| anyhow::anyhow!("{e}"))
}

fn train_in(cfg: &ExperimentConfig, out: &str, baseline: Option<BaselineKind>) -> anyhow::Result<(ExperimentConfig, Checkpoint)> {
    let cfg = ExperimentConfig {
        output_dir: cfg.output_dir.parent().expect("run dir has a parent").join(out),
        baseline,
        ..cfg.clone()
    };
    let run = commands::train(&cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok((cfg, run.outcome.checkpoint))
}

fn evaluate(cfg: &ExperimentConfig) -> anyhow::Result<f64> {
    let ckpt = cfg.output_dir.join(commands::CHECKPOINT_FILE);
    let m = commands::evaluate(cfg, &ckpt).map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(m.report.f_score)
}

fn primary_run(root: &Path) -> anyhow::Result<Run> {
    let start = Instant::now();
    let cfg = synth_config(&root.join("default"), 7, SynthSpec::default())?;
    let (cfg, checkpoint) = train_in(&cfg, "run", None)?;
    Ok(Run {
        dir: root.join("default"),
        cfg,
        checkpoint,
        elapsed: start.elapsed(),
    })
}

fn c1_end_to_end(run: &Run) -> Outcome {
    let f1 = evaluate(&run.cfg)?;
    let elapsed = run.elapsed.as_secs_f64();
    let oracle: HashMap<String, usize> = read_csv_rows(&run.dir.join(outputs::ORACLE_LABELS))?
        .into_iter()
        .map(|r| (r[0].clone(), r[2].parse().expect("archetype id")))
        .collect();
    let (mut planted, mut pseudo) = (Vec::new(), Vec::new());
    for row in read_csv_rows(&run.cfg.output_dir.join(outputs::PSEUDO_LABELS))? {
        planted.push(oracle[&row[0]]);
        pseudo.push(row[2].parse()?);
    }
    let ari = adjusted_rand_index(&pseudo, &planted)?;
    Ok((
        f1 >= 0.90 && ari >= 0.90 && elapsed <= 600.0,
        format!("dev macro-F1 {f1:.4}, ARI {ari:.4}, {elapsed:.0} s"),
    ))
}

fn c2_baseline_ordering(root: &Path) -> Outcome {
    let spec = SynthSpec {
        train_windows: 1000,
        dev_windows: 250,
        ..SynthSpec::mean_degenerate()
    };
    let base = synth_config(&root.join("degenerate"), 7, spec)?;
    let mut f1 = Vec::new();
    for (out, kind) in [("c2p", None), ("acc", Some(BaselineKind::Acc)), ("aac", Some(BaselineKind::Aac))] {
        let (cfg, _) = train_in(&base, out, kind)?;
        f1.push(evaluate(&cfg)?);
    }
    let (c2p, acc, aac) = (f1[0], f1[1], f1[2]);
    Ok((
        c2p >= 0.85 && acc >= 0.85 && aac <= 0.45 && c2p >= acc && acc > aac,
        format!("macro-F1 C2P {c2p:.4}, ACC {acc:.4}, AAC {aac:.4}"),
    ))
}

/// Minimum inertia over every assignment of points to k non-empty groups.
fn optimal_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; points[0].len()]; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        if counts.iter().all(|&c| c > 0) {
            let total: f64 = points
                .iter()
                .zip(&labels)
                .flat_map(|(p, &l)| {
                    let size = counts[l] as f64;
                    p.iter().zip(&sums[l]).map(move |(v, s)| v - s / size)
                })
                .map(|d| d * d)
                .sum();
            best = best.min(total);
        }
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

fn c3_kmeans_optimum() -> Outcome {
    let (mut hits, mut monotone) = (0, true);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let k = 2 + (seed % 2) as usize;
        let points: Vec<Vec<f64>> = (0..8).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let cfg = ClusterConfig {
            seed,
            ..ClusterConfig::with_k(k)
        };
        let fit = kmeans_fit(&Matrix::from_rows(&points)?, &cfg, None)?;
        monotone &= fit.inertia_history.windows(2).all(|w| w[1] <= w[0]);
        if (fit.inertia - optimal_inertia(&points, k)).abs() <= 1e-9 {
            hits += 1;
        }
    }
    Ok((
        hits >= 95 && monotone,
        format!("{hits}/100 optimal, inertia monotone: {monotone}"),
    ))
}

fn c4_gradients() -> Outcome {
    let mut worst = (0.0f64, String::new());
    for seed in 0..5 {
        for err in GradProblem::reduced(seed, 0.2)?.check(1e-6)? {
            if err.relative > worst.0 {
                worst = (err.relative, format!("{} (seed {seed})", err.name));
            }
        }
    }
    Ok((worst.0 <= 1e-4, format!("worst relative error {:.2e} at {}", worst.0, worst.1)))
}

fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(1e-3..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn c5_loss_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(2..9);
        let (pa, ps) = (random_simplex(&mut rng, k), random_simplex(&mut rng, k));
        let label = rng.random_range(0..k);
        let alpha = rng.random_range(0.0..=1.0);
        let l = joint_loss(&pa, &ps, label, alpha)?;
        worst = worst
            .max((l.total - (alpha * l.affect + (1.0 - alpha) * l.speech)).abs())
            .max((l.affect + pa[label].ln()).abs())
            .max((l.speech + ps[label].ln()).abs());
    }
    Ok((worst <= 1e-12, format!("worst deviation {worst:.1e} over 1000 tuples")))
}

fn c6_windowing() -> Outcome {
    let cfg = WindowConfig::default();
    let (mut mismatches, mut worst_offset) = (0, 0.0f64);
    for t in 0..=600usize {
        let formula = if t < 50 { 0 } else { (t - 50) / 25 + 1 };
        let enumerated = (0..).map(|i| i * 25).take_while(|s| s + 50 <= t).count();
        // Every feature row holds its own frame index, so a window's first
        // value is the frame it starts at.
        let rows = (2 * t).max(1);
        let speech = RecordingFeatures::new("r", rows, 1, (0..rows).map(|i| i as f32).collect())?;
        let affect = RecordingAffect::new("r", Attribute::Arousal, vec![0.0; t])?;
        let windows = make_windows(&speech, &affect, &cfg)?;
        for (w, (_, s)) in windows.iter().enumerate() {
            let offset = (f64::from(s.features[0]) * 0.02 - w as f64 * 25.0 * 0.04).abs();
            worst_offset = worst_offset.max(offset);
        }
        if window_count(t, 50, 25) != formula || enumerated != formula || windows.len() != formula {
            mismatches += 1;
        }
    }
    Ok((
        mismatches == 0 && worst_offset < 0.02,
        format!("{mismatches} mismatches over T_a = 0..=600, worst speech/affect start offset {worst_offset:.3} s"),
    ))
}

fn c7_metrics() -> Outcome {
    let hand = MetricsReport::from_labels(&[0, 0, 1, 1], &[0, 1, 1, 1], 2)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-4;
    let hand_ok = close(hand.accuracy, 0.75)
        && close(hand.precision, 0.8333)
        && close(hand.recall, 0.75)
        && close(hand.f_score, 0.7333);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let k = rng.random_range(1..7);
        let n = rng.random_range(1..60);
        let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let r = MetricsReport::from_labels(&t, &p, k)?;
        let present: Vec<usize> = (0..k).filter(|c| t.contains(c)).collect();
        let count = |f: &dyn Fn(usize, usize) -> bool| t.iter().zip(&p).filter(|(&a, &b)| f(a, b)).count() as f64;
        let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
        for &c in &present {
            let tp = count(&|a, b| a == c && b == c);
            let pred = count(&|_, b| b == c);
            let actual = count(&|a, _| a == c);
            let prec = if pred > 0.0 { tp / pred } else { 0.0 };
            let rec = tp / actual;
            ps += prec;
            rs += rec;
            fs += if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
        }
        let m = present.len() as f64;
        let acc = count(&|a, b| a == b) / n as f64;
        let ok = (r.accuracy - acc).abs() < 1e-12
            && (r.precision - ps / m).abs() < 1e-12
            && (r.recall - rs / m).abs() < 1e-12
            && (r.f_score - fs / m).abs() < 1e-12;
        mismatches += usize::from(!ok);
    }
    Ok((
        hand_ok && mismatches == 0,
        format!(
            "hand case acc {:.4} P {:.4} R {:.4} F {:.4}; {mismatches}/1000 random mismatches",
            hand.accuracy, hand.precision, hand.recall, hand.f_score
        ),
    ))
}

fn c8_elbow(run: &Run) -> Outcome {
    let manifest = Manifest::load(&run.cfg.manifest_path)?;
    let ds = manifest.load_split(Split::Train, Attribute::Arousal, &run.cfg.window, 1)?;
    let latents = run.checkpoint.cluster_points(&ds)?;
    let curve = elbow_sweep(&latents, 2..=10, &run.cfg.train_config().cluster_config())?;
    let non_increasing = curve.windows(2).all(|w| w[1].inertia <= w[0].inertia);
    let drop = largest_relative_drop(&curve);
    Ok((
        non_increasing && drop.is_some_and(|k| k <= 4),
        format!("non-increasing: {non_increasing}, largest drop at k = {drop:?}"),
    ))
}

fn c9_pairing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
    let v: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
    let m = pairing_matrix(&a, &v, 4)?;
    let total = m.total();
    let worst = m.percents.iter().flatten().map(|p| (p - 6.25).abs()).fold(0.0, f64::max);
    Ok((
        (total - 100.0).abs() <= 0.1 && worst <= 1.5,
        format!("total {total:.4}, largest cell deviation from 6.25 is {worst:.3}"),
    ))
}

fn c10_reproducibility(root: &Path, run: &Run) -> Outcome {
    let spec = SynthSpec {
        train_windows: 200,
        dev_windows: 50,
        ..SynthSpec::default()
    };
    let mut base = synth_config(&root.join("small"), 3, spec)?;
    base.train.total_epochs = 4;
    let (a, _) = train_in(&base, "a", None)?;
    let (b, _) = train_in(&base, "b", None)?;
    let log_a = fs::read(a.output_dir.join(outputs::LOSS_LOG))?;
    let log_b = fs::read(b.output_dir.join(outputs::LOSS_LOG))?;
    let bitwise = log_a == log_b;

    let loaded = load_checkpoint(&run.cfg.output_dir.join(commands::CHECKPOINT_FILE))?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (frames, dim) = (run.cfg.window.speech_frames, run.cfg.synth.feature_dim);
    let mut worst = 0.0f32;
    let (net, net_loaded) = (
        run.checkpoint.affectnet.as_ref().expect("C2P run"),
        loaded.affectnet.as_ref().expect("C2P checkpoint"),
    );
    for _ in 0..100 {
        let x: Vec<f32> = (0..frames * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c: Vec<f32> = (0..run.cfg.window.affect_len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pairs = [
            (run.checkpoint.speech_probs(&x)?, loaded.speech_probs(&x)?),
            (net.encode(&c)?, net_loaded.encode(&c)?),
        ];
        for (p, q) in pairs {
            worst = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(worst, f32::max);
        }
    }
    Ok((
        bitwise && worst <= 1e-6,
        format!("loss_log identical: {bitwise}, reload max output diff {worst:.1e}"),
    ))
}

fn c11_shapes() -> Outcome {
    let expected = [
        (32, 93, 1018),
        (32, 46, 509),
        (64, 40, 503),
        (64, 20, 251),
        (128, 16, 247),
        (256, 12, 243),
        (256, 6, 121),
        (512, 4, 119),
        (512, 2, 59),
        (512, 1, 29),
    ];
    let config = SpeechNetConfig {
        frames: 99,
        feature_dim: 1024,
        classes: 4,
        arch: SpeechArch::full(),
    };
    let net = SpeechNet::<f32>::new(config, &mut ChaCha8Rng::seed_from_u64(11))?;
    let out = net.forward(&vec![0.1; 99 * 1024])?;
    let got: Vec<(usize, usize, usize)> = out
        .stage_shapes()
        .iter()
        .map(|s| (s.channels, s.height, s.width))
        .collect();
    let flatten = SpeechArch::full().flatten_len(99, 1024)?;
    let last = got.last().copied().unwrap_or_default();
    Ok((
        got == expected && flatten == 14848 && out.probs.len() == 4,
        format!("{} stage shapes, final {}x{}x{}, flatten {flatten}", got.len(), last.1, last.2, last.0),
    ))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path();
    let run = primary_run(root);

    let report = |id: usize, name: &str, outcome: Outcome| -> bool {
        let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e:#}")));
        println!("criterion {id:>2} {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        pass
    };
    let with_run = |f: &dyn Fn(&Run) -> Outcome| -> Outcome {
        match &run {
            Ok(r) => f(r),
            Err(e) => Err(anyhow::anyhow!("synthetic training run failed: {e:#}")),
        }
    };

    let results = [
        report(1, "synthetic end-to-end recovery", with_run(&c1_end_to_end)),
        report(2, "baseline ordering", c2_baseline_ordering(root)),
        report(3, "k-means exhaustive optimum", c3_kmeans_optimum()),
        report(4, "gradient check", c4_gradients()),
        report(5, "loss identity", c5_loss_identity()),
        report(6, "windowing arithmetic", c6_windowing()),
        report(7, "metrics oracle", c7_metrics()),
        report(8, "elbow behavior", with_run(&c8_elbow)),
        report(9, "pairing matrix", c9_pairing()),
        report(10, "reproducibility and persistence", with_run(&|r| c10_reproducibility(root, r))),
        report(11, "shape conformance", c11_shapes()),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
