//! The alternating training routine.
//!
//! Per epoch: encode every affect window with the current AffectNet (no
//! dropout), cluster the latents with k-means into pseudo-labels, then train
//! AffectNet and SpeechNet jointly on shuffled batches under
//! `L = alpha * L_a + (1 - alpha) * L_s` with Adam.
//!
//! The clustering for epoch `e + 1` is computed right after epoch `e`
//! finishes (warm-started from epoch `e`'s centroids and relabeled to match
//! them), so a checkpoint taken after epoch `e` carries centroids that agree
//! with its own encoder.
//!
//! The encoder keeps moving, so the previous centroids are stale by the time
//! they are reused. The warm start is therefore the mean of the *new* latents
//! under the previous labels, and a cold k-means++ fit competes with it; the
//! lower-inertia solution wins.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{adam_step_params, AdamConfig, AdamState};
use crate::affectnet::{AffectNet, AffectNetConfig};
use crate::baselines::{baseline_points, BaselineKind};
use crate::clustering::{align_labels, assign, kmeans_fit, means, ClusterConfig, ClusterModel};
use crate::error::{Error, Result};
use crate::layers::{log_softmax_nll, ParamSet};
use crate::matrix::Matrix;
use crate::real::Real;
use crate::speechnet::{SpeechArchChoice, SpeechNet, SpeechNetConfig};
use crate::window::WindowedDataset;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the AffectNet loss in the joint loss.
    pub alpha: f64,
    pub k: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub total_epochs: usize,
    pub early_stop_patience: usize,
    pub early_stop_min_rel_delta: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub dropout: f64,
    pub speech_arch: SpeechArchChoice,
    pub kmeans_max_iterations: usize,
    pub kmeans_tolerance: f64,
    pub kmeans_restarts_cold: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            k: 4,
            learning_rate: 1e-3,
            batch_size: 256,
            total_epochs: 50,
            early_stop_patience: 5,
            early_stop_min_rel_delta: 1e-3,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            dropout: 0.25,
            speech_arch: SpeechArchChoice::Auto,
            kmeans_max_iterations: 300,
            kmeans_tolerance: 1e-6,
            kmeans_restarts_cold: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if self.batch_size < 1 || self.total_epochs < 1 {
            return Err(Error::Config("batch_size and total_epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        self.cluster_config().validate()
    }

    pub fn cluster_config(&self) -> ClusterConfig {
        ClusterConfig {
            k: self.k,
            max_iterations: self.kmeans_max_iterations,
            tolerance: self.kmeans_tolerance,
            restarts_cold: self.kmeans_restarts_cold,
            seed: self.seed,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// Epoch-level losses (means over all windows of the epoch) and clustering state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub loss: f64,
    pub loss_affect: f64,
    pub loss_speech: f64,
    /// Inertia of the clustering that supplied this epoch's pseudo-labels.
    pub inertia: f64,
    /// Fraction of windows whose pseudo-label differs from the previous epoch
    /// (0 for the first epoch).
    pub churn: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    C2p,
    Acc,
    Aac,
}

impl From<BaselineKind> for ModelKind {
    fn from(kind: BaselineKind) -> Self {
        match kind {
            BaselineKind::Acc => ModelKind::Acc,
            BaselineKind::Aac => ModelKind::Aac,
        }
    }
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::C2p => "c2p",
            ModelKind::Acc => "acc",
            ModelKind::Aac => "aac",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: ModelKind,
    pub config: TrainConfig,
    pub epoch: usize,
    /// Present for C2P models only.
    pub affectnet: Option<AffectNet<f32>>,
    pub speechnet: SpeechNet<f32>,
    /// k rows, in the space the labels were clustered in (latent, contour or mean).
    pub centroids: Matrix,
    pub metrics: LossReport,
}

impl Checkpoint {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn ensure_k(&self, requested: usize) -> Result<()> {
        if self.k() != requested {
            return Err(Error::KMismatch {
                checkpoint: self.k(),
                requested,
            });
        }
        Ok(())
    }

    /// Points the model clusters in: AffectNet latents for C2P, raw contours
    /// for ACC, per-window means for AAC.
    pub fn cluster_points(&self, dataset: &WindowedDataset) -> Result<Matrix> {
        match self.kind {
            ModelKind::C2p => {
                let net = self
                    .affectnet
                    .as_ref()
                    .ok_or_else(|| Error::Config("C2P checkpoint without AffectNet".into()))?;
                encode_all(net, dataset)
            }
            ModelKind::Acc => baseline_points(dataset, BaselineKind::Acc),
            ModelKind::Aac => baseline_points(dataset, BaselineKind::Aac),
        }
    }

    /// Cluster labels of the affect windows: nearest stored centroid.
    pub fn target_labels(&self, dataset: &WindowedDataset) -> Result<Vec<usize>> {
        let points = self.cluster_points(dataset)?;
        if points.cols() != self.centroids.cols() {
            return Err(Error::Shape(format!(
                "points have {} dims, centroids {}",
                points.cols(),
                self.centroids.cols()
            )));
        }
        Ok(assign(&points, &self.centroids))
    }

    pub fn speech_probs(&self, features: &[f32]) -> Result<Vec<f32>> {
        Ok(self.speechnet.forward(features)?.probs)
    }

    /// SpeechNet argmax per window.
    pub fn predict(&self, dataset: &WindowedDataset) -> Result<Vec<usize>> {
        dataset
            .speech_windows
            .iter()
            .map(|w| Ok(argmax(&self.speech_probs(&w.features)?)))
            .collect()
    }
}

/// Refits k-means on fresh latents, keeping cluster identities stable.
fn recluster(latents: &Matrix, prev: &ClusterModel, cfg: &ClusterConfig) -> Result<ClusterModel> {
    let (seeds, _) = means(latents, &prev.labels, &prev.centroids);
    let warm = kmeans_fit(latents, cfg, Some(&seeds))?;
    let cold = kmeans_fit(latents, cfg, None)?;
    let fitted = if cold.inertia < warm.inertia * (1.0 - 1e-9) { cold } else { warm };
    align_labels(&seeds, fitted)
}

pub fn argmax<F: Real>(xs: &[F]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Evaluation-mode latents of every affect window, one row per window.
pub fn encode_all<F: Real>(net: &AffectNet<F>, dataset: &WindowedDataset) -> Result<Matrix> {
    let dim = net.config.latent_dim();
    let mut data = Vec::with_capacity(dataset.len() * dim);
    for w in &dataset.affect_windows {
        let contour: Vec<F> = w.contour.iter().map(|&v| F::of(v as f64)).collect();
        data.extend(net.encode(&contour)?.into_iter().map(Real::f64));
    }
    Matrix::from_vec(dataset.len(), dim, data)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub reports: Vec<LossReport>,
    /// Pseudo-labels used during the last epoch that was trained.
    pub pseudo_labels: Vec<usize>,
    pub best_epoch: usize,
}

/// Gradients of the batch-mean joint loss.
#[derive(Debug, Clone)]
pub struct BatchGradients<F> {
    pub affect: Option<AffectNet<F>>,
    pub speech: SpeechNet<F>,
    /// Batch-mean `L_a` (0 when no AffectNet is trained).
    pub loss_affect: f64,
    pub loss_speech: f64,
}

impl<F> BatchGradients<F> {
    pub fn loss(&self, alpha: f64) -> f64 {
        alpha * self.loss_affect + (1.0 - alpha) * self.loss_speech
    }
}

/// Forward and backward over one batch. `contours` is ignored when `affect`
/// is `None` (baseline training, where only `L_s` counts).
#[allow(clippy::too_many_arguments)]
pub fn batch_gradients<F: Real>(
    affect: Option<&AffectNet<F>>,
    speech: &SpeechNet<F>,
    contours: &[&[F]],
    features: &[&[F]],
    labels: &[usize],
    alpha: f64,
    dropout_rng: Option<&mut (dyn RngCore + 'static)>,
) -> Result<BatchGradients<F>> {
    let mut grads = BatchGradients {
        affect: affect.map(zeroed),
        speech: zeroed(speech),
        loss_affect: 0.0,
        loss_speech: 0.0,
    };
    accumulate_batch(
        affect,
        speech,
        contours,
        features,
        labels,
        alpha,
        dropout_rng,
        &mut grads,
    )?;
    Ok(grads)
}

fn zeroed<F: Real, P: ParamSet<F> + Clone>(net: &P) -> P {
    let mut g = net.clone();
    g.zero_grad();
    g
}

#[allow(clippy::too_many_arguments)]
fn accumulate_batch<F: Real>(
    affect: Option<&AffectNet<F>>,
    speech: &SpeechNet<F>,
    contours: &[&[F]],
    features: &[&[F]],
    labels: &[usize],
    alpha: f64,
    mut dropout_rng: Option<&mut (dyn RngCore + 'static)>,
    grads: &mut BatchGradients<F>,
) -> Result<()> {
    let b = labels.len();
    if features.len() != b || (affect.is_some() && contours.len() != b) {
        return Err(Error::Shape("batch inputs and labels differ in length".into()));
    }
    let k = speech.classes();
    let scale_s = (1.0 - alpha) / b as f64;
    let scale_a = alpha / b as f64;
    let (mut sum_a, mut sum_s) = (0.0, 0.0);
    for i in 0..b {
        let label = labels[i];
        if label >= k {
            return Err(Error::LabelOutOfRange { label, k });
        }
        if let (Some(net), Some(g)) = (affect, grads.affect.as_mut()) {
            let out = net.forward(contours[i], dropout_rng.as_deref_mut())?;
            sum_a += log_softmax_nll(&out.logits, label).f64();
            let gl = softmax_grad(&out.probs, label, scale_a);
            net.backward(&out, &gl, g);
        }
        let out = speech.forward(features[i])?;
        sum_s += log_softmax_nll(&out.logits, label).f64();
        let gl = softmax_grad(&out.probs, label, scale_s);
        speech.backward(&out, &gl, &mut grads.speech);
    }
    grads.loss_affect = sum_a / b as f64;
    grads.loss_speech = sum_s / b as f64;
    Ok(())
}

/// `scale * (probs - onehot(label))`: gradient of scaled cross-entropy w.r.t. logits.
fn softmax_grad<F: Real>(probs: &[F], label: usize, scale: f64) -> Vec<F> {
    let s = F::of(scale);
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let t = if j == label { F::one() } else { F::zero() };
            (p - t) * s
        })
        .collect()
}

/// Where each epoch's labels come from.
pub(crate) enum LabelSource {
    /// Re-cluster AffectNet latents every epoch.
    Alternating,
    /// Labels fixed up front (baselines).
    Fixed { kind: BaselineKind, model: ClusterModel },
}

pub fn train_c2p(dataset: &WindowedDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    run(dataset, cfg, LabelSource::Alternating)
}

pub(crate) fn run(dataset: &WindowedDataset, cfg: &TrainConfig, source: LabelSource) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let n = dataset.len();
    if n < cfg.k {
        return Err(Error::Config(format!("{n} windows cannot form {} clusters", cfg.k)));
    }
    let alternating = matches!(source, LabelSource::Alternating);
    let alpha = if alternating { cfg.alpha } else { 0.0 };

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);

    let mut affect = if alternating {
        let mut ac = AffectNetConfig::new(dataset.config.affect_len, cfg.k);
        ac.dropout = cfg.dropout;
        Some(AffectNet::<f32>::new(ac, &mut init_rng)?)
    } else {
        None
    };
    let arch = cfg
        .speech_arch
        .resolve(dataset.config.speech_frames, dataset.feature_dim())?;
    let mut speech = SpeechNet::<f32>::new(
        SpeechNetConfig {
            frames: dataset.config.speech_frames,
            feature_dim: dataset.feature_dim(),
            classes: cfg.k,
            arch,
        },
        &mut init_rng,
    )?;
    let adam = cfg.adam();
    let mut adam_a = affect.as_ref().map(AdamState::for_params);
    let mut adam_s = AdamState::for_params(&speech);

    let cluster_cfg = cfg.cluster_config();
    let (kind, mut clusters) = match source {
        LabelSource::Alternating => {
            let latents = encode_all(affect.as_ref().expect("C2P has AffectNet"), dataset)?;
            (ModelKind::C2p, kmeans_fit(&latents, &cluster_cfg, None)?)
        }
        LabelSource::Fixed { kind, model } => (ModelKind::from(kind), model),
    };

    let contours: Vec<&[f32]> = dataset.affect_windows.iter().map(|w| w.contour.as_slice()).collect();
    let features: Vec<&[f32]> = dataset.speech_windows.iter().map(|w| w.features.as_slice()).collect();

    let mut grads = BatchGradients {
        affect: affect.as_ref().map(zeroed),
        speech: zeroed(&speech),
        loss_affect: 0.0,
        loss_speech: 0.0,
    };
    let mut reports = Vec::with_capacity(cfg.total_epochs);
    let mut previous_labels: Option<Vec<usize>> = None;
    let mut best: Option<Checkpoint> = None;
    let mut reference_loss = f64::INFINITY;
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut last_labels = clusters.labels.clone();

    for epoch in 1..=cfg.total_epochs {
        let labels = clusters.labels.clone();
        let churn = previous_labels.as_ref().map_or(0.0, |prev| {
            prev.iter().zip(&labels).filter(|(a, b)| a != b).count() as f64 / n as f64
        });

        order.shuffle(&mut shuffle_rng);
        let (mut sum_a, mut sum_s) = (0.0, 0.0);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let bc: Vec<&[f32]> = idx.iter().map(|&i| contours[i]).collect();
            let bf: Vec<&[f32]> = idx.iter().map(|&i| features[i]).collect();
            let bl: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            if let Some(g) = grads.affect.as_mut() {
                g.zero_grad();
            }
            grads.speech.zero_grad();
            accumulate_batch(
                affect.as_ref(),
                &speech,
                &bc,
                &bf,
                &bl,
                alpha,
                Some(&mut dropout_rng),
                &mut grads,
            )?;
            let batch_loss = grads.loss(alpha);
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    l_a: grads.loss_affect,
                    l_s: grads.loss_speech,
                });
            }
            sum_a += grads.loss_affect * idx.len() as f64;
            sum_s += grads.loss_speech * idx.len() as f64;
            if let (Some(net), Some(g), Some(state)) = (affect.as_mut(), grads.affect.as_ref(), adam_a.as_mut()) {
                adam_step_params(net, g, state, &adam)?;
            }
            adam_step_params(&mut speech, &grads.speech, &mut adam_s, &adam)?;
        }
        let loss_affect = sum_a / n as f64;
        let loss_speech = sum_s / n as f64;
        let report = LossReport {
            epoch,
            loss: alpha * loss_affect + (1.0 - alpha) * loss_speech,
            loss_affect,
            loss_speech,
            inertia: clusters.inertia,
            churn,
        };
        reports.push(report);
        last_labels = labels.clone();

        let next = match &affect {
            Some(net) => {
                let latents = encode_all(net, dataset)?;
                recluster(&latents, &clusters, &cluster_cfg)?
            }
            None => clusters.clone(),
        };

        if best.as_ref().is_none_or(|b| report.loss < b.metrics.loss) {
            best = Some(Checkpoint {
                format_version: CHECKPOINT_FORMAT_VERSION,
                kind,
                config: cfg.clone(),
                epoch,
                affectnet: affect.clone(),
                speechnet: speech.clone(),
                centroids: next.centroids.clone(),
                metrics: report,
            });
        }
        previous_labels = Some(labels);
        clusters = next;

        if reference_loss - report.loss > cfg.early_stop_min_rel_delta * libm::fabs(reference_loss)
            || !reference_loss.is_finite()
        {
            reference_loss = report.loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    let checkpoint = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best_epoch: checkpoint.epoch,
        checkpoint,
        reports,
        pseudo_labels: last_labels,
    })
}
