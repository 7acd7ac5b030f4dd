//! Machine-readable run artifacts. Every CSV opens with a `# c2p <name> v<N>`
//! comment row; `metrics.json` carries the same information as fields.

use std::fs;
use std::io::Write;
use std::path::Path;

use c2p_core::analysis::{ClusterContourSummary, ElbowPoint, PairingMatrix};
use c2p_core::metrics::MetricsReport;
use c2p_core::trainer::{LossReport, ModelKind};
use c2p_core::synth::{Archetype, SyntheticSplit};
use c2p_core::window::{Attribute, WindowedDataset};
use c2p_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, DataResult};

pub const LOSS_LOG: &str = "loss_log.csv";
pub const METRICS: &str = "metrics.json";
pub const CLUSTERS: &str = "clusters.json";
pub const PAIRING: &str = "pairing.csv";
pub const ELBOW: &str = "elbow.csv";
pub const ORACLE_LABELS: &str = "oracle_labels.csv";
pub const SCHEMA_VERSION: u32 = 1;

pub fn contours_file(attribute: Attribute) -> String {
    format!("contours_{}.csv", attribute.name())
}

fn write_csv(path: &Path, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> DataResult<()> {
    let io = |e: std::io::Error| DataError::io(path, e);
    let mut out = Vec::new();
    writeln!(out, "# c2p {name} v{SCHEMA_VERSION}").map_err(io)?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let err = |e: csv::Error| DataError::io(path, e.into());
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(io)?;
    }
    fs::write(path, out).map_err(io)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> DataResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| DataError::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| DataError::io(path, e))
}

pub fn write_loss_log(path: &Path, reports: &[LossReport]) -> DataResult<()> {
    write_csv(
        path,
        "loss_log",
        &["epoch", "loss", "loss_affect", "loss_speech", "inertia", "churn"],
        reports.iter().map(|r| {
            vec![
                r.epoch.to_string(),
                r.loss.to_string(),
                r.loss_affect.to_string(),
                r.loss_speech.to_string(),
                r.inertia.to_string(),
                r.churn.to_string(),
            ]
        }),
    )
}

/// `metrics.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub schema: String,
    pub schema_version: u32,
    pub model: ModelKind,
    pub attribute: Attribute,
    pub k: usize,
    pub samples: u64,
    #[serde(flatten)]
    pub report: MetricsReport,
}

impl MetricsFile {
    pub fn new(model: ModelKind, attribute: Attribute, report: MetricsReport) -> Self {
        Self {
            schema: "c2p.metrics".into(),
            schema_version: SCHEMA_VERSION,
            model,
            attribute,
            k: report.support.len(),
            samples: report.samples(),
            report,
        }
    }
}

pub fn write_metrics(path: &Path, metrics: &MetricsFile) -> DataResult<()> {
    write_json(path, metrics)
}

pub fn read_metrics(path: &Path) -> DataResult<MetricsFile> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::json(path, e))
}

/// `clusters.json` next to a trained checkpoint: centroids plus label counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersFile {
    pub schema: String,
    pub schema_version: u32,
    pub model: ModelKind,
    pub k: usize,
    pub best_epoch: usize,
    pub centroids: Matrix,
    pub label_counts: Vec<usize>,
}

pub fn write_clusters(path: &Path, model: ModelKind, best_epoch: usize, centroids: &Matrix, labels: &[usize]) -> DataResult<()> {
    let mut label_counts = vec![0; centroids.rows()];
    for &l in labels {
        label_counts[l] += 1;
    }
    write_json(
        path,
        &ClustersFile {
            schema: "c2p.clusters".into(),
            schema_version: SCHEMA_VERSION,
            model,
            k: centroids.rows(),
            best_epoch,
            centroids: centroids.clone(),
            label_counts,
        },
    )
}

/// One row per (cluster, position). An empty cluster gets a single row with
/// blank values, occupancy 0 and `empty = true`.
pub fn write_contours(path: &Path, summaries: &[ClusterContourSummary]) -> DataResult<()> {
    let mut rows = Vec::new();
    for s in summaries {
        let trend = s.trend.map_or("undefined", |t| t.name());
        if s.members == 0 {
            rows.push(vec![
                s.cluster_id.to_string(),
                String::new(),
                String::new(),
                String::new(),
                "0".into(),
                trend.into(),
                "true".into(),
            ]);
            continue;
        }
        for (p, (m, sd)) in s.mean_contour.iter().zip(&s.std_contour).enumerate() {
            rows.push(vec![
                s.cluster_id.to_string(),
                p.to_string(),
                m.to_string(),
                sd.to_string(),
                s.occupancy.to_string(),
                trend.into(),
                "false".into(),
            ]);
        }
    }
    write_csv(
        path,
        "contours",
        &["cluster_id", "position", "mean", "std", "occupancy", "trend", "empty"],
        rows,
    )
}

pub fn write_pairing(path: &Path, pairing: &PairingMatrix) -> DataResult<()> {
    let rows = pairing.percents.iter().enumerate().flat_map(|(a, row)| {
        row.iter()
            .enumerate()
            .map(move |(v, pct)| vec![a.to_string(), v.to_string(), pct.to_string()])
    });
    write_csv(path, "pairing", &["arousal_cluster", "valence_cluster", "percent"], rows)
}

pub fn write_elbow(path: &Path, curve: &[ElbowPoint]) -> DataResult<()> {
    write_csv(
        path,
        "elbow",
        &["k", "inertia"],
        curve.iter().map(|p| vec![p.k.to_string(), p.inertia.to_string()]),
    )
}

/// Data rows of a c2p CSV (comment and header rows skipped).
pub fn read_csv_rows(path: &Path) -> DataResult<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let body: String = text.lines().skip_while(|l| l.starts_with('#')).collect::<Vec<_>>().join("\n");
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    rdr.records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| DataError::Csv {
                    path: path.to_path_buf(),
                    line: e.position().map_or(0, |p| p.line()),
                    message: e.to_string(),
                })
        })
        .collect()
}

pub const PSEUDO_LABELS: &str = "pseudo_labels.csv";

/// Training pseudo-labels, one row per window.
pub fn write_pseudo_labels(path: &Path, dataset: &WindowedDataset, labels: &[usize]) -> DataResult<()> {
    write_csv(
        path,
        "pseudo_labels",
        &["recording_id", "window_index", "label"],
        dataset
            .affect_windows
            .iter()
            .zip(labels)
            .map(|(w, l)| vec![w.recording_id.clone(), w.window_index.to_string(), l.to_string()]),
    )
}

/// Hidden archetypes of a synthetic dataset, one row per recording.
pub fn write_oracle_labels(path: &Path, archetypes: &[Archetype], splits: &[&SyntheticSplit]) -> DataResult<()> {
    let mut rows = Vec::new();
    for s in splits {
        let split = crate::commands::split_name(s.split);
        for i in 0..s.len() {
            let (a, v) = (s.arousal_archetypes[i], s.valence_archetypes[i]);
            rows.push(vec![
                s.recording_ids[i].clone(),
                split.into(),
                a.to_string(),
                archetypes[a].name().into(),
                v.to_string(),
                archetypes[v].name().into(),
            ]);
        }
    }
    write_csv(
        path,
        "oracle_labels",
        &["recording_id", "split", "arousal_id", "arousal_archetype", "valence_id", "valence_archetype"],
        rows,
    )
}
