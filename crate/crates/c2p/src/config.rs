//! Experiment configuration files (JSON). Every field has a default, and
//! relative paths resolve against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use c2p_core::baselines::BaselineKind;
use c2p_core::synth::SynthSpec;
use c2p_core::trainer::TrainConfig;
use c2p_core::window::{Attribute, Split, WindowConfig};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, DataResult};

/// What the elbow sweep clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ElbowSpace {
    /// The checkpoint's own clustering space (AffectNet latents for C2P).
    #[default]
    Model,
    /// Raw affect contours.
    Contour,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub split: Split,
    pub elbow_k_min: usize,
    pub elbow_k_max: usize,
    pub elbow_space: ElbowSpace,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            split: Split::Train,
            elbow_k_min: 2,
            elbow_k_max: 10,
            elbow_space: ElbowSpace::Model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest_path: PathBuf,
    pub attribute: Attribute,
    pub window: WindowConfig,
    /// Training hyperparameters. `train.seed` is replaced by `seed`.
    pub train: TrainConfig,
    /// Train a baseline instead of C2P.
    pub baseline: Option<BaselineKind>,
    pub output_dir: PathBuf,
    /// Seeds training, clustering and synthetic generation.
    pub seed: u64,
    pub analysis: AnalysisConfig,
    pub synth: SynthSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifest_path: PathBuf::from("manifest.json"),
            attribute: Attribute::Arousal,
            window: WindowConfig::default(),
            train: TrainConfig::default(),
            baseline: None,
            output_dir: PathBuf::from("out"),
            seed: 0,
            analysis: AnalysisConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> DataResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| DataError::json(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest_path = base.join(&cfg.manifest_path);
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> DataResult<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| DataError::json(path, e))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| DataError::io(path, e))
    }

    /// The training config with the experiment seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.window.validate().map_err(|e| format!("window: {e}"))?;
        self.train_config().validate().map_err(|e| format!("train: {e}"))?;
        let a = &self.analysis;
        if a.elbow_k_min < 1 || a.elbow_k_min > a.elbow_k_max {
            return Err(format!(
                "analysis: elbow range {}..={} is empty or starts below 1",
                a.elbow_k_min, a.elbow_k_max
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_all_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.train.alpha, 0.2);
        assert_eq!(cfg.train.batch_size, 256);
        assert_eq!(cfg.train.total_epochs, 50);
        assert_eq!(cfg.train.k, 4);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"train": {"alpha": 0.5}, "attribute": "valence", "baseline": "aac"}"#).unwrap();
        assert_eq!(cfg.train.alpha, 0.5);
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert_eq!(cfg.attribute, Attribute::Valence);
        assert_eq!(cfg.baseline, Some(BaselineKind::Aac));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"alpah": 0.5}"#).is_err());
    }

    #[test]
    fn seed_reaches_training() {
        let cfg = ExperimentConfig {
            seed: 42,
            ..ExperimentConfig::default()
        };
        assert_eq!(cfg.train_config().seed, 42);
        assert_eq!(cfg.train_config().cluster_config().seed, 42);
    }
}
