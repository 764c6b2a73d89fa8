//! CSV and JSON documents.
//!
//! Floats are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use hessbound_core::alignment::{AlignmentMatrix, GridField};
use hessbound_core::curvature::Histogram;
use hessbound_core::training::TrainReport;
use hessbound_core::{Activation, LabeledDataset, NetworkSpec, ParamVector, SymmetricMatrix};

use crate::error::{Error, Result};

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

/// Dataset CSV with header `f0,...,f{d-1},label`.
pub fn dataset_csv(data: &LabeledDataset) -> String {
    let mut out = String::new();
    for j in 0..data.dim() {
        let _ = write!(out, "f{j},");
    }
    out.push_str("label\n");
    for (x, y) in data.iter() {
        for v in x {
            out.push_str(&fmt_f64(*v));
            out.push(',');
        }
        let _ = writeln!(out, "{y}");
    }
    out
}

pub fn write_dataset_csv(path: impl AsRef<Path>, data: &LabeledDataset) -> Result<()> {
    write_text(path.as_ref(), &dataset_csv(data))
}

/// Reads a dataset CSV. The class count is one more than the largest label.
pub fn read_dataset_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let d = header.len().saturating_sub(1);
    if d == 0 || &header[d] != "label" {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            message: "header must be f0,...,f{d-1},label".into(),
        });
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != d + 1 {
            return Err(Error::WrongColumnCount {
                path: path.into(),
                line,
                expected: d + 1,
                got: record.len(),
            });
        }
        for field in record.iter().take(d) {
            features.push(field.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.into(),
                line,
                message: format!("`{field}`: {e}"),
            })?);
        }
        labels.push(
            record[d]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse {
                    path: path.into(),
                    line,
                    message: format!("label `{}`: {e}", &record[d]),
                })?,
        );
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("csv")
        .to_string();
    Ok(LabeledDataset::new(name, d, classes, features, labels)?)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.into(),
        line,
        message: e.to_string(),
    }
}

/// Parameters together with the architecture they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDocument {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
}

impl ParamDocument {
    pub fn new(spec: &NetworkSpec, theta: &ParamVector) -> Self {
        Self {
            layer_widths: spec.layer_widths().to_vec(),
            activation: spec.activation(),
            values: theta.as_slice().to_vec(),
            config_fingerprint: None,
        }
    }

    pub fn into_parts(self) -> Result<(NetworkSpec, ParamVector)> {
        let spec = NetworkSpec::new(self.layer_widths, self.activation)?;
        let theta = ParamVector::from_values(&spec, self.values)?;
        Ok((spec, theta))
    }
}

pub fn read_params(path: impl AsRef<Path>) -> Result<(NetworkSpec, ParamVector)> {
    read_json::<ParamDocument>(path)?.into_parts()
}

/// Serializable view of a [`TrainReport`]; checkpoints are written as
/// separate parameter documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReportDocument {
    pub scheme: String,
    pub seed: u64,
    pub epochs_run: usize,
    pub final_loss: f64,
    pub final_train_accuracy: f64,
    pub converged: bool,
    pub loss_history: Vec<f64>,
    pub checkpoint_epochs: Vec<usize>,
    pub config_fingerprint: String,
}

impl TrainReportDocument {
    pub fn new(report: &TrainReport, scheme: &str, seed: u64, fingerprint: &str) -> Self {
        Self {
            scheme: scheme.into(),
            seed,
            epochs_run: report.epochs_run,
            final_loss: report.final_loss,
            final_train_accuracy: report.final_train_accuracy,
            converged: report.converged,
            loss_history: report.loss_history.clone(),
            checkpoint_epochs: report.checkpoint_epochs.clone(),
            config_fingerprint: fingerprint.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDocument {
    pub eigenvalues: Vec<f64>,
    pub histogram: Histogram,
    pub outlier_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<usize>,
    pub config_fingerprint: String,
}

/// `sample,label,zero_gradient,A{i}...` with one row per training sample,
/// keeping the first `k` eigenvector columns.
pub fn alignment_csv(am: &AlignmentMatrix, labels: &[usize], k: usize) -> String {
    let k = k.min(am.k());
    let mut out = String::from("sample,label,zero_gradient");
    for i in &am.eigen_indices()[..k] {
        let _ = write!(out, ",A{}", i + 1);
    }
    out.push('\n');
    for s in 0..am.num_samples() {
        let id = am.sample_ids()[s];
        let _ = write!(
            out,
            "{id},{},{}",
            labels[id],
            u8::from(am.zero_gradient()[s])
        );
        for v in &am.row(s)[..k] {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// `x,y,prediction,A1...Ak` with one row per grid node.
pub fn grid_field_csv(field: &GridField) -> String {
    let mut out = String::from("x,y,prediction");
    for i in 0..field.values.len() {
        let _ = write!(out, ",A{}", i + 1);
    }
    out.push('\n');
    for (idx, pred) in field.predictions.iter().enumerate() {
        let [x, y] = field.grid.node_at(idx);
        let _ = write!(out, "{},{},{pred}", fmt_f64(x), fmt_f64(y));
        for col in &field.values {
            out.push(',');
            out.push_str(&fmt_f64(col[idx]));
        }
        out.push('\n');
    }
    out
}

/// One row per matrix row, no header.
pub fn matrix_csv(m: &SymmetricMatrix) -> String {
    let mut out = String::new();
    for row in m.as_row_major().chunks(m.dim()) {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// `index,eigenvalue`, descending.
pub fn spectrum_csv(eigenvalues: &[f64]) -> String {
    let mut out = String::from("index,eigenvalue\n");
    for (i, v) in eigenvalues.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, fmt_f64(*v));
    }
    out
}

pub fn write_csv(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_text(path.as_ref(), text)
}
