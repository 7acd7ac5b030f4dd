//! Per-recording feature/annotation containers and their segmentation into
//! aligned sliding windows.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affect annotation sample period (40 ms).
pub const AFFECT_PERIOD_S: f64 = 0.040;
/// Acoustic feature frame period (20 ms).
pub const FRAME_PERIOD_S: f64 = 0.020;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Arousal,
    Valence,
}

impl Attribute {
    pub fn name(self) -> &'static str {
        match self {
            Attribute::Arousal => "arousal",
            Attribute::Valence => "valence",
        }
    }
}

impl core::str::FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "arousal" => Ok(Attribute::Arousal),
            "valence" => Ok(Attribute::Valence),
            other => Err(Error::Config(format!("unknown attribute {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
}

/// Row-major `[T_s, D]` feature matrix for one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingFeatures {
    pub recording_id: String,
    rows: usize,
    cols: usize,
    frames: Vec<f32>,
}

impl RecordingFeatures {
    pub fn new(recording_id: impl Into<String>, rows: usize, cols: usize, frames: Vec<f32>) -> Result<Self> {
        let recording_id = recording_id.into();
        if cols == 0 {
            return Err(Error::Shape(format!("{recording_id}: feature dimension must be >= 1")));
        }
        if frames.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{recording_id}: {} values for a {rows}x{cols} matrix",
                frames.len()
            )));
        }
        if let Some(i) = frames.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!(
                "{recording_id}: non-finite feature at frame {}, column {}",
                i / cols,
                i % cols
            )));
        }
        Ok(Self {
            recording_id,
            rows,
            cols,
            frames,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn frames(&self) -> &[f32] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.frames[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingAffect {
    pub recording_id: String,
    pub attribute: Attribute,
    pub samples: Vec<f32>,
}

impl RecordingAffect {
    pub fn new(recording_id: impl Into<String>, attribute: Attribute, samples: Vec<f32>) -> Result<Self> {
        let recording_id = recording_id.into();
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("{recording_id}: non-finite affect sample {i}")));
        }
        Ok(Self {
            recording_id,
            attribute,
            samples,
        })
    }

    /// Number of samples outside the conventional `[-1, 1]` range.
    pub fn out_of_range(&self) -> usize {
        self.samples.iter().filter(|v| v.abs() > 1.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub window_seconds: f64,
    pub hop_seconds: f64,
    /// Affect samples per window (`N_a`).
    pub affect_len: usize,
    /// Speech feature frames per window (`N_s`).
    pub speech_frames: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_seconds: 2.0,
            hop_seconds: 1.0,
            affect_len: 50,
            speech_frames: 99,
        }
    }
}

impl WindowConfig {
    pub fn hop_samples(&self) -> usize {
        libm::round(self.hop_seconds / AFFECT_PERIOD_S) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_seconds > 0.0) {
            return Err(Error::Config("window_seconds must be positive".into()));
        }
        if !(self.hop_seconds > 0.0 && self.hop_seconds <= self.window_seconds) {
            return Err(Error::Config(format!(
                "hop_seconds must lie in (0, {}], got {}",
                self.window_seconds, self.hop_seconds
            )));
        }
        let n_a = libm::round(self.window_seconds / AFFECT_PERIOD_S) as usize;
        if self.affect_len != n_a {
            return Err(Error::Config(format!(
                "affect_len {} does not match a {} s window at 40 ms ({n_a})",
                self.affect_len, self.window_seconds
            )));
        }
        if self.hop_samples() == 0 {
            return Err(Error::Config("hop is shorter than one affect sample".into()));
        }
        if self.speech_frames == 0 {
            return Err(Error::Config("speech_frames must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffectWindow {
    pub window_index: usize,
    pub recording_id: String,
    pub contour: Vec<f32>,
}

impl AffectWindow {
    pub fn mean(&self) -> f64 {
        self.contour.iter().map(|&v| v as f64).sum::<f64>() / self.contour.len() as f64
    }
}

/// Row-major `[N_s, D]` slice of a recording's features.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechFeatureWindow {
    pub window_index: usize,
    pub recording_id: String,
    pub feature_dim: usize,
    pub features: Vec<f32>,
}

impl SpeechFeatureWindow {
    pub fn frames(&self) -> usize {
        self.features.len() / self.feature_dim.max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub split: Split,
    pub affect_windows: Vec<AffectWindow>,
    pub speech_windows: Vec<SpeechFeatureWindow>,
    pub config: WindowConfig,
}

impl WindowedDataset {
    pub fn new(
        split: Split,
        affect_windows: Vec<AffectWindow>,
        speech_windows: Vec<SpeechFeatureWindow>,
        config: WindowConfig,
    ) -> Result<Self> {
        if affect_windows.len() != speech_windows.len() {
            return Err(Error::Alignment(format!(
                "{} affect windows vs {} speech windows",
                affect_windows.len(),
                speech_windows.len()
            )));
        }
        let dim = speech_windows.first().map_or(0, |w| w.feature_dim);
        for (a, s) in affect_windows.iter().zip(&speech_windows) {
            if a.window_index != s.window_index || a.recording_id != s.recording_id {
                return Err(Error::Alignment(format!(
                    "affect window {}#{} paired with speech window {}#{}",
                    a.recording_id, a.window_index, s.recording_id, s.window_index
                )));
            }
            if a.contour.len() != config.affect_len {
                return Err(Error::Shape(format!(
                    "{}#{}: contour length {} != {}",
                    a.recording_id,
                    a.window_index,
                    a.contour.len(),
                    config.affect_len
                )));
            }
            if s.feature_dim != dim || s.features.len() != config.speech_frames * dim {
                return Err(Error::Shape(format!(
                    "{}#{}: speech window is not {}x{dim}",
                    s.recording_id, s.window_index, config.speech_frames
                )));
            }
        }
        Ok(Self {
            split,
            affect_windows,
            speech_windows,
            config,
        })
    }

    /// Segments each `(features, affect)` recording pair and concatenates the
    /// windows ordered by `(recording_id, window_index)`.
    pub fn from_recordings(
        split: Split,
        recordings: &[(RecordingFeatures, RecordingAffect)],
        config: WindowConfig,
    ) -> Result<Self> {
        config.validate()?;
        let mut order: Vec<usize> = (0..recordings.len()).collect();
        order.sort_by(|&a, &b| recordings[a].0.recording_id.cmp(&recordings[b].0.recording_id));
        let mut affect = Vec::new();
        let mut speech = Vec::new();
        for i in order {
            let (f, a) = &recordings[i];
            for (aw, sw) in make_windows(f, a, &config)? {
                affect.push(aw);
                speech.push(sw);
            }
        }
        Self::new(split, affect, speech, config)
    }

    pub fn len(&self) -> usize {
        self.affect_windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.affect_windows.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.speech_windows.first().map_or(0, |w| w.feature_dim)
    }
}

/// `floor((T_a - N_a) / hop) + 1` when `T_a >= N_a`, else 0.
pub fn window_count(affect_samples: usize, affect_len: usize, hop: usize) -> usize {
    if affect_samples < affect_len || hop == 0 {
        0
    } else {
        (affect_samples - affect_len) / hop + 1
    }
}

/// Cuts one recording into aligned `(affect, speech)` window pairs.
///
/// Window `w` starts at affect sample `w * hop` and at the feature frame
/// nearest the same instant. The speech slice is exactly `N_s` frames; if the
/// feature stream ends early (allowed up to one hop of duration mismatch) the
/// last frame is repeated.
pub fn make_windows(
    features: &RecordingFeatures,
    affect: &RecordingAffect,
    cfg: &WindowConfig,
) -> Result<Vec<(AffectWindow, SpeechFeatureWindow)>> {
    cfg.validate()?;
    if features.recording_id != affect.recording_id {
        return Err(Error::Alignment(format!(
            "features for {:?} paired with affect for {:?}",
            features.recording_id, affect.recording_id
        )));
    }
    let t_a = affect.samples.len();
    let hop = cfg.hop_samples();
    let count = window_count(t_a, cfg.affect_len, hop);
    if count == 0 {
        return Ok(Vec::new());
    }
    let speech_s = features.rows() as f64 * FRAME_PERIOD_S;
    let affect_s = t_a as f64 * AFFECT_PERIOD_S;
    if features.rows() == 0 || libm::fabs(speech_s - affect_s) > cfg.hop_seconds + 1e-9 {
        return Err(Error::Alignment(format!(
            "{}: speech covers {speech_s:.3} s but affect covers {affect_s:.3} s",
            affect.recording_id
        )));
    }
    let dim = features.cols();
    let mut out = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * hop;
        let start_s = start as f64 * AFFECT_PERIOD_S;
        let first_frame = libm::round(start_s / FRAME_PERIOD_S) as usize;
        let mut slice = Vec::with_capacity(cfg.speech_frames * dim);
        for f in first_frame..first_frame + cfg.speech_frames {
            slice.extend_from_slice(features.frame(f.min(features.rows() - 1)));
        }
        out.push((
            AffectWindow {
                window_index: w,
                recording_id: affect.recording_id.clone(),
                contour: affect.samples[start..start + cfg.affect_len].to_vec(),
            },
            SpeechFeatureWindow {
                window_index: w,
                recording_id: affect.recording_id.clone(),
                feature_dim: dim,
                features: slice,
            },
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn recording(t_a: usize, t_s: usize, dim: usize) -> (RecordingFeatures, RecordingAffect) {
        let frames = (0..t_s * dim).map(|i| (i / dim) as f32).collect();
        (
            RecordingFeatures::new("r", t_s, dim, frames).unwrap(),
            RecordingAffect::new("r", Attribute::Arousal, (0..t_a).map(|i| i as f32).collect()).unwrap(),
        )
    }

    #[test]
    fn five_minute_recording_has_299_windows() {
        let (f, a) = recording(7500, 15000, 2);
        let w = make_windows(&f, &a, &WindowConfig::default()).unwrap();
        assert_eq!(w.len(), 299);
        assert!(w.iter().all(|(a, s)| a.contour.len() == 50 && s.frames() == 99));
    }

    #[test]
    fn short_recording_has_no_windows() {
        let (f, a) = recording(49, 98, 3);
        assert!(make_windows(&f, &a, &WindowConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn speech_slice_starts_at_matching_frame() {
        let (f, a) = recording(200, 400, 1);
        for (aw, sw) in make_windows(&f, &a, &WindowConfig::default()).unwrap() {
            let affect_start = aw.contour[0] as f64 * AFFECT_PERIOD_S;
            let speech_start = sw.features[0] as f64 * FRAME_PERIOD_S;
            assert!((affect_start - speech_start).abs() < FRAME_PERIOD_S);
        }
    }

    #[test]
    fn hundredth_frame_is_dropped() {
        let (f, a) = recording(50, 100, 1);
        let w = make_windows(&f, &a, &WindowConfig::default()).unwrap();
        assert_eq!(w[0].1.features, (0..99).map(|i| i as f32).collect::<Vec<_>>());
    }

    #[test]
    fn short_speech_is_edge_padded() {
        let (f, a) = recording(100, 180, 1);
        let w = make_windows(&f, &a, &WindowConfig::default()).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(*w[2].1.features.last().unwrap(), 179.0);
    }

    #[test]
    fn duration_mismatch_is_an_error() {
        let (f, a) = recording(200, 300, 1);
        assert!(matches!(
            make_windows(&f, &a, &WindowConfig::default()),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn mismatched_ids_rejected() {
        let (f, _) = recording(50, 100, 1);
        let a = RecordingAffect::new("other", Attribute::Valence, vec![0.0; 50]).unwrap();
        assert!(make_windows(&f, &a, &WindowConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = WindowConfig {
            hop_seconds: 3.0,
            ..WindowConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = WindowConfig {
            affect_len: 49,
            ..WindowConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(WindowConfig::default().hop_samples(), 25);
    }
}
