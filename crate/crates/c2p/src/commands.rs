//! The subcommands as library functions.
//!
//! Failures are either validation failures (bad config, missing or malformed
//! inputs, k mismatch; exit code 2) or runtime failures (training diverged,
//! outputs could not be written; exit code 1).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use c2p_core::analysis::{
    elbow_sweep, evaluate as score, largest_relative_drop, pairing_matrix, summarize_clusters, ClusterContourSummary,
    ElbowPoint, PairingMatrix,
};
use c2p_core::baselines::{baseline_points, train_baseline, BaselineKind};
use c2p_core::synth::generate_synthetic;
use c2p_core::trainer::{train_c2p, Checkpoint, ModelKind, TrainOutcome};
use c2p_core::window::{Attribute, Split, WindowedDataset};
use c2p_core::Matrix;

use crate::affect_csv::write_affect;
use crate::c2pf;
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{ElbowSpace, ExperimentConfig};
use crate::manifest::{num_threads, Manifest, ManifestEntry};
use crate::outputs::{self, MetricsFile};

pub const CHECKPOINT_FILE: &str = "checkpoint.tar";
pub const SYNTH_CONFIG_FILE: &str = "c2p.json";

#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(e) => write!(f, "invalid input: {e:#}"),
            Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for Failure {}

pub type CmdResult<T> = Result<T, Failure>;

trait Classify<T> {
    fn invalid(self) -> CmdResult<T>;
    fn failed(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Validation(e.into()))
    }

    fn failed(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

/// Core errors: diverged training is a runtime failure, anything else means
/// the inputs or config did not fit together.
fn core<T>(r: c2p_core::Result<T>) -> CmdResult<T> {
    r.map_err(|e| match e {
        c2p_core::Error::NonFiniteLoss { .. } => Failure::Runtime(e.into()),
        other => Failure::Validation(other.into()),
    })
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub attribute: Option<Attribute>,
}

pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> CmdResult<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) if !p.is_file() => return Err(Failure::Validation(anyhow!("config file {} not found", p.display()))),
        Some(p) => ExperimentConfig::load(p).invalid()?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &overrides.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(attribute) = overrides.attribute {
        cfg.attribute = attribute;
    }
    cfg.validate().map_err(|m| Failure::Validation(anyhow!(m)))?;
    Ok(cfg)
}

fn open_manifest(cfg: &ExperimentConfig) -> CmdResult<Manifest> {
    let path = &cfg.manifest_path;
    if !path.is_file() {
        return Err(Failure::Validation(anyhow!("manifest {} not found", path.display())));
    }
    let manifest = Manifest::load(path).invalid()?;
    let missing = manifest.missing_files();
    if let Some(first) = missing.first() {
        return Err(Failure::Validation(anyhow!(
            "manifest {} references {} missing file(s), e.g. {}",
            path.display(),
            missing.len(),
            first.display()
        )));
    }
    Ok(manifest)
}

fn load_split(cfg: &ExperimentConfig, manifest: &Manifest, split: Split, attribute: Attribute) -> CmdResult<WindowedDataset> {
    let threads = num_threads().map_err(|m| Failure::Validation(anyhow!(m)))?;
    let ds = manifest.load_split(split, attribute, &cfg.window, threads).invalid()?;
    let split = split_name(split);
    if ds.is_empty() {
        return Err(Failure::Validation(anyhow!(
            "manifest {} yields no {split} windows",
            manifest.path.display()
        )));
    }
    log::info!("{} {split} windows of {}", ds.len(), attribute.name());
    Ok(ds)
}

pub fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Dev => "dev",
    }
}

fn out_dir(cfg: &ExperimentConfig) -> CmdResult<&Path> {
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| anyhow!("cannot create {}: {e}", cfg.output_dir.display()))
        .failed()?;
    Ok(&cfg.output_dir)
}

fn open_checkpoint(path: &Path, k: usize) -> CmdResult<Checkpoint> {
    let ckpt = load_checkpoint(path).invalid()?;
    ckpt.ensure_k(k)
        .map_err(|e| anyhow!("{}: {e}", path.display()))
        .invalid()?;
    Ok(ckpt)
}

#[derive(Debug)]
pub struct TrainRun {
    pub outcome: TrainOutcome,
    pub checkpoint_path: PathBuf,
}

/// Trains C2P (or the configured baseline) on the train split and writes the
/// checkpoint, `loss_log.csv`, `clusters.json` and `pseudo_labels.csv`.
pub fn train(cfg: &ExperimentConfig) -> CmdResult<TrainRun> {
    let manifest = open_manifest(cfg)?;
    let ds = load_split(cfg, &manifest, Split::Train, cfg.attribute)?;
    let tc = cfg.train_config();
    let outcome = match cfg.baseline {
        Some(kind) => core(train_baseline(&ds, kind, &tc))?,
        None => core(train_c2p(&ds, &tc))?,
    };
    if let Some(last) = outcome.reports.last() {
        log::info!(
            "{} epochs, best {} (loss {:.6})",
            last.epoch,
            outcome.best_epoch,
            outcome.checkpoint.metrics.loss
        );
    }

    let out = out_dir(cfg)?;
    let checkpoint_path = out.join(CHECKPOINT_FILE);
    save_checkpoint(&outcome.checkpoint, &checkpoint_path).failed()?;
    outputs::write_loss_log(&out.join(outputs::LOSS_LOG), &outcome.reports).failed()?;
    outputs::write_clusters(
        &out.join(outputs::CLUSTERS),
        outcome.checkpoint.kind,
        outcome.best_epoch,
        &outcome.checkpoint.centroids,
        &outcome.pseudo_labels,
    )
    .failed()?;
    outputs::write_pseudo_labels(&out.join(outputs::PSEUDO_LABELS), &ds, &outcome.pseudo_labels).failed()?;
    log::info!("wrote {}", checkpoint_path.display());
    Ok(TrainRun {
        outcome,
        checkpoint_path,
    })
}

/// Scores a checkpoint on the dev split and writes `metrics.json`.
pub fn evaluate(cfg: &ExperimentConfig, checkpoint: &Path) -> CmdResult<MetricsFile> {
    let ckpt = open_checkpoint(checkpoint, cfg.train.k)?;
    let manifest = open_manifest(cfg)?;
    let ds = load_split(cfg, &manifest, Split::Dev, cfg.attribute)?;
    let report = core(score(&ckpt, &ds, cfg.train.k))?;
    log::info!(
        "{} {}: accuracy {:.4}, P {:.4}, R {:.4}, F {:.4}",
        ckpt.kind.name(),
        cfg.attribute.name(),
        report.accuracy,
        report.precision,
        report.recall,
        report.f_score
    );
    let metrics = MetricsFile::new(ckpt.kind, cfg.attribute, report);
    outputs::write_metrics(&out_dir(cfg)?.join(outputs::METRICS), &metrics).failed()?;
    Ok(metrics)
}

#[derive(Debug)]
pub struct Analysis {
    pub summaries: Vec<ClusterContourSummary>,
    pub valence_summaries: Option<Vec<ClusterContourSummary>>,
    pub pairing: Option<PairingMatrix>,
    pub elbow: Vec<ElbowPoint>,
}

fn elbow_points(cfg: &ExperimentConfig, ckpt: Option<&Checkpoint>, ds: &WindowedDataset) -> CmdResult<Matrix> {
    match (ckpt, cfg.analysis.elbow_space) {
        (Some(c), ElbowSpace::Model) => core(c.cluster_points(ds)),
        _ => core(baseline_points(ds, BaselineKind::Acc)),
    }
}

fn sweep(cfg: &ExperimentConfig, points: &Matrix) -> CmdResult<Vec<ElbowPoint>> {
    let a = &cfg.analysis;
    let curve = core(elbow_sweep(
        points,
        a.elbow_k_min..=a.elbow_k_max,
        &cfg.train_config().cluster_config(),
    ))?;
    if let Some(k) = largest_relative_drop(&curve) {
        log::info!("largest relative inertia drop at k = {k}");
    }
    Ok(curve)
}

/// Per-cluster contour summaries and the elbow curve for `--checkpoint`
/// (the model of `cfg.attribute`). With a valence checkpoint as well, also
/// the arousal x valence pairing matrix.
pub fn analyze(cfg: &ExperimentConfig, checkpoint: &Path, checkpoint_valence: Option<&Path>) -> CmdResult<Analysis> {
    if checkpoint_valence.is_some() && cfg.attribute != Attribute::Arousal {
        return Err(Failure::Validation(anyhow!(
            "--checkpoint-valence pairs with an arousal --checkpoint, but the attribute is {}",
            cfg.attribute.name()
        )));
    }
    let k = cfg.train.k;
    let ckpt = open_checkpoint(checkpoint, k)?;
    let manifest = open_manifest(cfg)?;
    let split = cfg.analysis.split;
    let ds = load_split(cfg, &manifest, split, cfg.attribute)?;
    let labels = core(ckpt.target_labels(&ds))?;
    let summaries = core(summarize_clusters(&ds.affect_windows, &labels, k))?;
    let points = elbow_points(cfg, Some(&ckpt), &ds)?;
    let elbow = sweep(cfg, &points)?;

    let out = out_dir(cfg)?;
    outputs::write_contours(&out.join(outputs::contours_file(cfg.attribute)), &summaries).failed()?;
    outputs::write_elbow(&out.join(outputs::ELBOW), &elbow).failed()?;

    let (valence_summaries, pairing) = match checkpoint_valence {
        Some(path) => {
            let vckpt = open_checkpoint(path, k)?;
            let vds = load_split(cfg, &manifest, split, Attribute::Valence)?;
            let same_windows = vds.len() == ds.len()
                && vds
                    .affect_windows
                    .iter()
                    .zip(&ds.affect_windows)
                    .all(|(v, a)| v.recording_id == a.recording_id && v.window_index == a.window_index);
            if !same_windows {
                return Err(Failure::Validation(anyhow!(
                    "arousal and valence annotations do not yield the same windows"
                )));
            }
            let vlabels = core(vckpt.target_labels(&vds))?;
            let vsummaries = core(summarize_clusters(&vds.affect_windows, &vlabels, k))?;
            let pairing = core(pairing_matrix(&labels, &vlabels, k))?;
            outputs::write_contours(&out.join(outputs::contours_file(Attribute::Valence)), &vsummaries).failed()?;
            outputs::write_pairing(&out.join(outputs::PAIRING), &pairing).failed()?;
            (Some(vsummaries), Some(pairing))
        }
        None => {
            log::warn!("pairing needs both an arousal and a valence checkpoint; pairing.csv not written");
            (None, None)
        }
    };
    Ok(Analysis {
        summaries,
        valence_summaries,
        pairing,
        elbow,
    })
}

/// Elbow curve alone: over raw contours, or over a checkpoint's clustering
/// space when one is given. Writes `elbow.csv`.
pub fn sweep_k(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> CmdResult<Vec<ElbowPoint>> {
    let ckpt = checkpoint.map(|p| open_checkpoint(p, cfg.train.k)).transpose()?;
    let manifest = open_manifest(cfg)?;
    let ds = load_split(cfg, &manifest, cfg.analysis.split, cfg.attribute)?;
    let points = elbow_points(cfg, ckpt.as_ref(), &ds)?;
    let curve = sweep(cfg, &points)?;
    outputs::write_elbow(&out_dir(cfg)?.join(outputs::ELBOW), &curve).failed()?;
    Ok(curve)
}

/// Writes a synthetic dataset under the output directory: one recording per
/// window (`features/<id>.c2pf`, `affect/<id>.arousal.csv`,
/// `affect/<id>.valence.csv`), `manifest.json`, `oracle_labels.csv`, and a
/// ready-to-use `c2p.json`. Returns the path of that config.
pub fn synth(cfg: &ExperimentConfig) -> CmdResult<PathBuf> {
    let spec = &cfg.synth;
    let (train, dev) = core(generate_synthetic(spec, cfg.seed))?;
    let out = out_dir(cfg)?;
    for sub in ["features", "affect"] {
        fs::create_dir_all(out.join(sub))
            .map_err(|e| anyhow!("cannot create {}: {e}", out.join(sub).display()))
            .failed()?;
    }
    let mut entries = Vec::with_capacity(train.len() + dev.len());
    for split in [&train, &dev] {
        for i in 0..split.len() {
            let id = &split.recording_ids[i];
            let entry = ManifestEntry {
                recording_id: id.clone(),
                features_path: PathBuf::from(format!("features/{id}.c2pf")),
                arousal_path: PathBuf::from(format!("affect/{id}.arousal.csv")),
                valence_path: PathBuf::from(format!("affect/{id}.valence.csv")),
                split: split.split,
            };
            c2pf::write(
                &out.join(&entry.features_path),
                spec.window.speech_frames,
                spec.feature_dim,
                &split.speech[i],
            )
            .failed()?;
            write_affect(&out.join(&entry.arousal_path), &split.arousal[i]).failed()?;
            write_affect(&out.join(&entry.valence_path), &split.valence[i]).failed()?;
            entries.push(entry);
        }
    }
    let manifest = Manifest {
        path: out.join("manifest.json"),
        entries,
    };
    manifest.save().failed()?;
    outputs::write_oracle_labels(&out.join(outputs::ORACLE_LABELS), &spec.archetypes, &[&train, &dev]).failed()?;

    let run_config = ExperimentConfig {
        manifest_path: PathBuf::from("manifest.json"),
        output_dir: PathBuf::from("run"),
        window: spec.window,
        train: c2p_core::trainer::TrainConfig {
            k: spec.archetypes.len(),
            seed: cfg.seed,
            ..cfg.train.clone()
        },
        ..cfg.clone()
    };
    let config_path = out.join(SYNTH_CONFIG_FILE);
    run_config.save(&config_path).failed()?;
    log::info!(
        "wrote {} train and {} dev recordings to {}",
        train.len(),
        dev.len(),
        out.display()
    );
    Ok(config_path)
}

/// Model kind a config trains.
pub fn model_kind(cfg: &ExperimentConfig) -> ModelKind {
    cfg.baseline.map_or(ModelKind::C2p, ModelKind::from)
}
