//! ACC and AAC baselines: k-means labels computed once from the raw contour
//! vectors (ACC) or from the scalar window means (AAC), then a SpeechNet
//! trained on those fixed labels with the same optimizer and stopping rule
//! as C2P.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans_fit, ClusterConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::trainer::{run, LabelSource, TrainConfig, TrainOutcome};
use crate::window::WindowedDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    /// Affect-contour clusters.
    Acc,
    /// Average-affect clusters.
    Aac,
}

impl core::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "acc" => Ok(BaselineKind::Acc),
            "aac" => Ok(BaselineKind::Aac),
            other => Err(Error::Config(alloc::format!("unknown baseline {other:?}"))),
        }
    }
}

/// ACC: one row per window holding the raw contour. AAC: one row per window
/// holding the contour mean.
pub fn baseline_points(dataset: &WindowedDataset, kind: BaselineKind) -> Result<Matrix> {
    let n = dataset.len();
    match kind {
        BaselineKind::Acc => {
            let dim = dataset.config.affect_len;
            let data: Vec<f64> = dataset
                .affect_windows
                .iter()
                .flat_map(|w| w.contour.iter().map(|&v| v as f64))
                .collect();
            Matrix::from_vec(n, dim, data)
        }
        BaselineKind::Aac => {
            let data = dataset.affect_windows.iter().map(|w| w.mean()).collect();
            Matrix::from_vec(n, 1, data)
        }
    }
}

/// Labels and centroids of the baseline clustering.
pub fn baseline_labels(
    dataset: &WindowedDataset,
    kind: BaselineKind,
    cfg: &ClusterConfig,
) -> Result<(Vec<usize>, Matrix)> {
    if dataset.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let model = kmeans_fit(&baseline_points(dataset, kind)?, cfg, None)?;
    Ok((model.labels, model.centroids))
}

pub fn train_baseline(dataset: &WindowedDataset, kind: BaselineKind, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let model = kmeans_fit(&baseline_points(dataset, kind)?, &cfg.cluster_config(), None)?;
    run(dataset, cfg, LabelSource::Fixed { kind, model })
}
