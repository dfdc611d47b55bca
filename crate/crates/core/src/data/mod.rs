//! Tabular datasets: CSV ingestion and export, min-max feature scaling, and
//! the seeded synthetic anomaly generators.

mod synthetic;

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use thiserror::Error;

pub use synthetic::{generate_synthetic, SyntheticKind, DEFAULT_ANOMALY_RATE, DEFAULT_SAMPLES};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("non-numeric cell {value:?} at row {row}, column {column:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("label value {value:?} at row {row} is not 0 or 1")]
    InvalidLabel { row: usize, value: String },
    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),
    #[error("empty table: {0}")]
    EmptyTable(String),
    #[error("invalid synthetic parameters: {0}")]
    InvalidSynthetic(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

/// Feature matrix (n rows x d columns) with optional 0/1 ground truth used
/// only for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Option<Vec<u8>>,
    pub name: String,
    pub anomaly_rate: Option<f64>,
    /// Column names used on export; generated as `x1..xd` when absent.
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Array2<f64>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self, DataError> {
        let (n, d) = features.dim();
        if n < 2 {
            return Err(DataError::Invalid(format!("need at least 2 rows, got {n}")));
        }
        if d < 1 {
            return Err(DataError::Invalid("need at least 1 feature column".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid("non-finite feature value".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(DataError::Invalid(format!(
                    "{} labels for {n} rows",
                    labels.len()
                )));
            }
            if let Some(bad) = labels.iter().find(|&&l| l > 1) {
                return Err(DataError::Invalid(format!("label {bad} is not 0 or 1")));
            }
        }
        Ok(Self {
            features,
            labels,
            name: name.into(),
            anomaly_rate: None,
            feature_names: (1..=d).map(|j| format!("x{j}")).collect(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Fraction of rows labeled anomalous, if labels are present.
    pub fn labeled_anomaly_rate(&self) -> Option<f64> {
        self.labels.as_ref().map(|l| {
            l.iter().filter(|&&v| v == 1).count() as f64 / l.len() as f64
        })
    }
}

/// Reads a headered, comma-separated numeric table.
///
/// Every non-label cell must parse as a finite real; the label column, when
/// named, must hold `0` or `1`.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let csv_err = |source| DataError::Csv {
        path: path.to_owned(),
        source,
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(DataError::EmptyTable(format!("{} has no header", path.display())));
    }
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DataError::MissingLabelColumn(name.to_owned()))?,
        ),
        None => None,
    };
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(DataError::EmptyTable("no feature columns".into()));
    }

    let d = feature_names.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if Some(j) == label_idx {
                labels.push(match cell {
                    "0" => 0u8,
                    "1" => 1u8,
                    _ => {
                        return Err(DataError::InvalidLabel {
                            row,
                            value: cell.to_owned(),
                        })
                    }
                });
            } else {
                let value = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DataError::NonNumericCell {
                        row,
                        column: header[j].clone(),
                        value: cell.to_owned(),
                    })?;
                values.push(value);
            }
        }
    }
    let n = values.len() / d;
    if n == 0 {
        return Err(DataError::EmptyTable(format!("{} has no data rows", path.display())));
    }
    let features = Array2::from_shape_vec((n, d), values)
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut ds = Dataset::new(name, features, label_idx.map(|_| labels))?;
    ds.feature_names = feature_names;
    Ok(ds)
}

/// Writes the dataset in the same CSV layout [`load_csv`] reads, with the
/// labels (if any) in a trailing `label` column.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.to_owned(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    let mut header = ds.feature_names.join(",");
    if ds.labels.is_some() {
        header.push_str(",label");
    }
    writeln!(out, "{header}").map_err(io_err)?;
    for (i, row) in ds.features.rows().into_iter().enumerate() {
        let mut line = row
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        if let Some(labels) = &ds.labels {
            line.push(',');
            line.push_str(&labels[i].to_string());
        }
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Affine-maps each feature column to [0, 1]; constant columns become 0.5.
pub fn scale_features(ds: &Dataset) -> Dataset {
    let mut scaled = ds.clone();
    for mut column in scaled.features.columns_mut() {
        let (lo, hi) = column_range(column.view());
        let span = hi - lo;
        column.mapv_inplace(|v| if span > 0.0 { (v - lo) / span } else { 0.5 });
    }
    scaled
}

fn column_range(column: ArrayView1<f64>) -> (f64, f64) {
    column
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}
