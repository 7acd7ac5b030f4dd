//! Dataset manifests: a JSON list of recordings, each naming a feature file,
//! two affect CSVs and a split. Relative paths resolve against the
//! manifest's directory.

use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use c2p_core::window::{Attribute, RecordingAffect, RecordingFeatures, Split, WindowConfig, WindowedDataset};
use serde::{Deserialize, Serialize};

use crate::affect_csv::load_affect;
use crate::c2pf::load_features;
use crate::error::{DataError, DataResult};

pub const THREADS_ENV: &str = "C2P_NUM_THREADS";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub recording_id: String,
    pub features_path: PathBuf,
    pub arousal_path: PathBuf,
    pub valence_path: PathBuf,
    pub split: Split,
}

impl ManifestEntry {
    pub fn affect_path(&self, attribute: Attribute) -> &Path {
        match attribute {
            Attribute::Arousal => &self.arousal_path,
            Attribute::Valence => &self.valence_path,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub path: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> DataResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| DataError::json(path, e))?;
        let mut ids: Vec<&str> = entries.iter().map(|e| e.recording_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(DataError::invalid(path, format!("recording {:?} listed twice", w[0])));
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn save(&self) -> DataResult<()> {
        let text = serde_json::to_string_pretty(&self.entries).map_err(|e| DataError::json(&self.path, e))?;
        fs::write(&self.path, text + "\n").map_err(|e| DataError::io(&self.path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new("")).join(p)
        }
    }

    /// Every referenced file that does not exist.
    pub fn missing_files(&self) -> Vec<PathBuf> {
        self.entries
            .iter()
            .flat_map(|e| [&e.features_path, &e.arousal_path, &e.valence_path])
            .map(|p| self.resolve(p))
            .filter(|p| !p.is_file())
            .collect()
    }

    /// Loads and windows every recording of `split`, using up to `threads`
    /// workers. The result is ordered by recording id, whatever the scheduling.
    pub fn load_split(
        &self,
        split: Split,
        attribute: Attribute,
        window: &WindowConfig,
        threads: usize,
    ) -> DataResult<WindowedDataset> {
        let entries: Vec<&ManifestEntry> = self.entries.iter().filter(|e| e.split == split).collect();
        let load = |e: &ManifestEntry| -> DataResult<(RecordingFeatures, RecordingAffect)> {
            let features = load_features(&self.resolve(&e.features_path), &e.recording_id)?;
            let affect = load_affect(&self.resolve(e.affect_path(attribute)), &e.recording_id, attribute)?;
            Ok((features, affect))
        };
        let threads = threads.clamp(1, entries.len().max(1));
        let chunk = entries.len().div_ceil(threads).max(1);
        let recordings: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = entries
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|e| load(e)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("loader thread panicked"))
                .collect::<DataResult<_>>()
        })?;
        WindowedDataset::from_recordings(split, &recordings, *window).map_err(|e| DataError::core(&self.path, e))
    }
}

/// Worker count: `C2P_NUM_THREADS` when set, otherwise the available cores.
pub fn num_threads() -> Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<NonZeroUsize>()
            .map(NonZeroUsize::get)
            .map_err(|_| format!("{THREADS_ENV}={v:?} is not a positive integer")),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, NonZeroUsize::get)),
    }
}
