//! Checkpoint archives. A tar file holding:
//!
//! - `meta.json`: format version, model kind, epoch, training config, loss
//!   snapshot and both network configs
//! - `clusters.json`: the k centroids
//! - `params.json`: name and shape of every parameter tensor, per network
//! - `affectnet.bin`, `speechnet.bin`: the tensors as little-endian f32, in
//!   `params.json` order (`affectnet.bin` is absent for baselines)

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use c2p_core::affectnet::{AffectNet, AffectNetConfig};
use c2p_core::layers::ParamSet;
use c2p_core::speechnet::{SpeechNet, SpeechNetConfig};
use c2p_core::trainer::{Checkpoint, LossReport, ModelKind, TrainConfig, CHECKPOINT_FORMAT_VERSION};
use c2p_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, DataResult};

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    kind: ModelKind,
    epoch: usize,
    config: TrainConfig,
    metrics: LossReport,
    affectnet: Option<AffectNetConfig>,
    speechnet: SpeechNetConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct Clusters {
    k: usize,
    centroids: Matrix,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct ParamIndex {
    affectnet: Vec<TensorEntry>,
    speechnet: Vec<TensorEntry>,
}

fn index_and_blob<P: ParamSet<f32>>(net: &P) -> (Vec<TensorEntry>, Vec<u8>) {
    let mut index = Vec::new();
    let mut blob = Vec::new();
    for (name, t) in net.tensors() {
        index.push(TensorEntry {
            name,
            shape: t.shape.clone(),
        });
        for v in &t.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    (index, blob)
}

/// Serializes a checkpoint to archive bytes. The output depends only on the
/// checkpoint (fixed timestamps and modes).
pub fn to_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let meta = Meta {
        format_version: ckpt.format_version,
        kind: ckpt.kind,
        epoch: ckpt.epoch,
        config: ckpt.config.clone(),
        metrics: ckpt.metrics,
        affectnet: ckpt.affectnet.as_ref().map(|n| n.config.clone()),
        speechnet: ckpt.speechnet.config.clone(),
    };
    let clusters = Clusters {
        k: ckpt.k(),
        centroids: ckpt.centroids.clone(),
    };
    let mut index = ParamIndex::default();
    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();
    let (speech_index, speech_blob) = index_and_blob(&ckpt.speechnet);
    index.speechnet = speech_index;
    let affect_blob = ckpt.affectnet.as_ref().map(|net| {
        let (i, blob) = index_and_blob(net);
        index.affectnet = i;
        blob
    });
    files.push(("meta.json", json(&meta)));
    files.push(("clusters.json", json(&clusters)));
    files.push(("params.json", json(&index)));
    if let Some(blob) = affect_blob {
        files.push(("affectnet.bin", blob));
    }
    files.push(("speechnet.bin", speech_blob));

    let mut builder = tar::Builder::new(Vec::new());
    for (name, data) in files {
        let mut header = tar::Header::new_gnu();
        header.set_size(data.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_cksum();
        builder
            .append_data(&mut header, name, data.as_slice())
            .expect("writing to memory");
    }
    builder.into_inner().expect("writing to memory")
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("checkpoint parts serialize");
    v.push(b'\n');
    v
}

/// Writes through a temporary sibling and renames, so a crash never leaves a
/// half-written checkpoint under `path`.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> DataResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, to_bytes(ckpt)).map_err(|e| DataError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| DataError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> DataResult<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    from_bytes(path, &bytes)
}

pub fn from_bytes(path: &Path, bytes: &[u8]) -> DataResult<Checkpoint> {
    let bad = |m: String| DataError::checkpoint(path, m);
    let mut files: HashMap<String, Vec<u8>> = HashMap::new();
    let mut archive = tar::Archive::new(bytes);
    let entries = archive
        .entries()
        .map_err(|e| bad(format!("not a checkpoint archive: {e}")))?;
    for entry in entries {
        let mut entry = entry.map_err(|e| bad(format!("corrupt archive: {e}")))?;
        let name = entry
            .path()
            .map_err(|e| bad(format!("corrupt archive: {e}")))?
            .to_string_lossy()
            .into_owned();
        let mut data = Vec::with_capacity(entry.size() as usize);
        entry
            .read_to_end(&mut data)
            .map_err(|e| bad(format!("{name} is truncated: {e}")))?;
        if data.len() as u64 != entry.size() {
            return Err(bad(format!("{name} is truncated")));
        }
        files.insert(name, data);
    }
    let take = |name: &str| files.get(name).ok_or_else(|| bad(format!("archive has no {name}")));

    let meta_bytes = take("meta.json")?;
    let raw: serde_json::Value =
        serde_json::from_slice(meta_bytes).map_err(|e| bad(format!("meta.json: {e}")))?;
    let version = raw.get("format_version").and_then(serde_json::Value::as_u64);
    if version != Some(CHECKPOINT_FORMAT_VERSION as u64) {
        return Err(bad(format!(
            "checkpoint format version {}, this build reads {CHECKPOINT_FORMAT_VERSION}",
            version.map_or("missing".to_string(), |v| v.to_string())
        )));
    }
    let meta: Meta = serde_json::from_value(raw).map_err(|e| bad(format!("meta.json: {e}")))?;
    let clusters: Clusters =
        serde_json::from_slice(take("clusters.json")?).map_err(|e| bad(format!("clusters.json: {e}")))?;
    let index: ParamIndex =
        serde_json::from_slice(take("params.json")?).map_err(|e| bad(format!("params.json: {e}")))?;
    if clusters.centroids.rows() != clusters.k {
        return Err(bad(format!(
            "clusters.json declares k = {} but holds {} centroids",
            clusters.k,
            clusters.centroids.rows()
        )));
    }

    let speechnet = SpeechNet::from_params(meta.speechnet, &tensors(&index.speechnet, take("speechnet.bin")?, "speechnet.bin").map_err(&bad)?)
        .map_err(|e| bad(format!("speechnet: {e}")))?;
    let affectnet = match (meta.kind, meta.affectnet) {
        (ModelKind::C2p, Some(cfg)) => {
            let params = tensors(&index.affectnet, take("affectnet.bin")?, "affectnet.bin").map_err(&bad)?;
            Some(AffectNet::from_params(cfg, &params).map_err(|e| bad(format!("affectnet: {e}")))?)
        }
        (ModelKind::C2p, None) => return Err(bad("C2P checkpoint without an AffectNet".into())),
        (_, Some(_)) => return Err(bad("baseline checkpoint carries an AffectNet".into())),
        (_, None) => None,
    };
    if speechnet.classes() != clusters.k {
        return Err(bad(format!(
            "SpeechNet has {} classes but there are {} centroids",
            speechnet.classes(),
            clusters.k
        )));
    }
    Ok(Checkpoint {
        format_version: meta.format_version,
        kind: meta.kind,
        config: meta.config,
        epoch: meta.epoch,
        affectnet,
        speechnet,
        centroids: clusters.centroids,
        metrics: meta.metrics,
    })
}

type Tensors = Vec<(String, Vec<usize>, Vec<f32>)>;

fn tensors(index: &[TensorEntry], blob: &[u8], name: &str) -> Result<Tensors, String> {
    let total: usize = index.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if blob.len() != 4 * total {
        return Err(format!("{name} holds {} bytes, the index needs {}", blob.len(), 4 * total));
    }
    let mut values = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    Ok(index
        .iter()
        .map(|t| {
            let n = t.shape.iter().product();
            (t.name.clone(), t.shape.clone(), values.by_ref().take(n).collect())
        })
        .collect())
}
