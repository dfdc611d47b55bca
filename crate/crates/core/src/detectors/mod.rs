//! Source (teacher) anomaly detectors.
//!
//! Five detectors are implemented natively. Scores from any other detector can
//! be brought in through [`import_scores`]. Every detector follows the
//! convention that a higher score means more anomalous. Raw outputs are
//! unbounded and go through [`minmax_scale`] before they seed pseudo labels.

mod hbos;
mod iforest;
mod neighbors;
mod pca;
mod scores;

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;

pub use hbos::{fit_score_hbos, Hbos};
pub use iforest::{average_path_length, fit_score_iforest, IsolationForest};
pub use neighbors::{euclidean, fit_score_knn, fit_score_lof, k_nearest, Knn, Lof, LOF_MIN_REACH};
pub use pca::{fit_score_pca, Pca};
pub use scores::{import_scores, minmax_scale, minmax_values, write_scores};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("k ≥ n (k = {k}, n = {n}); k must be smaller than the row count")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid detector parameter: {0}")]
    InvalidParam(String),
    #[error("PCA components must satisfy 1 <= components < d (components = {components}, d = {d})")]
    ComponentsOutOfRange { components: usize, d: usize },
    #[error("covariance needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("query has {got} columns, detector was fit on {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("score file has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite score {value:?} on line {line}")]
    NonFinite { line: usize, value: String },
    #[error("unparseable score {value:?} on line {line}")]
    Parse { line: usize, value: String },
    #[error("unknown detector {0:?}")]
    UnknownDetector(String),
    #[error("score file {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Length-n vector of anomaly scores; `normalized` marks values in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    values: Vec<f64>,
    normalized: bool,
}

impl ScoreVector {
    pub fn raw(values: Vec<f64>) -> Self {
        Self {
            values,
            normalized: false,
        }
    }

    /// Wraps values already known to lie in [0, 1]. Returns `None` otherwise.
    pub fn normalized(values: Vec<f64>) -> Option<Self> {
        values
            .iter()
            .all(|v| (0.0..=1.0).contains(v))
            .then_some(Self {
                values,
                normalized: true,
            })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl AsRef<[f64]> for ScoreVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    IForest,
    Hbos,
    Lof,
    Knn,
    Pca,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::IForest,
        DetectorKind::Hbos,
        DetectorKind::Lof,
        DetectorKind::Knn,
        DetectorKind::Pca,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::IForest => "iforest",
            DetectorKind::Hbos => "hbos",
            DetectorKind::Lof => "lof",
            DetectorKind::Knn => "knn",
            DetectorKind::Pca => "pca",
        }
    }

    /// The neighbor count used when none is given explicitly.
    pub fn default_k(self) -> usize {
        match self {
            DetectorKind::Lof => 20,
            _ => 5,
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| DetectorError::UnknownDetector(s.to_owned()))
    }
}

/// Detector choice plus every kind-specific setting. Settings that do not
/// apply to `kind` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    pub kind: DetectorKind,
    pub trees: usize,
    pub subsample: usize,
    pub bins: usize,
    /// Neighbor count for LOF/KNN; `None` picks the kind's default.
    pub k: Option<usize>,
    /// Retained PCA components; `None` means `max(1, d / 2)`.
    pub components: Option<usize>,
    pub seed: u64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self::new(DetectorKind::IForest)
    }
}

impl DetectorParams {
    pub fn new(kind: DetectorKind) -> Self {
        Self {
            kind,
            trees: 100,
            subsample: 256,
            bins: 10,
            k: None,
            components: None,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn resolved_k(&self) -> usize {
        self.k.unwrap_or_else(|| self.kind.default_k())
    }

    /// Fits the detector and returns it together with its training scores.
    pub fn fit(&self, ds: &Dataset) -> Result<FittedDetector, DetectorError> {
        let x = ds.features.view();
        let (model, scores): (Box<dyn Scorer>, Vec<f64>) = match self.kind {
            DetectorKind::IForest => {
                let m = IsolationForest::fit(x, self.trees, self.subsample, self.seed)?;
                let s = m.score(x)?;
                (Box::new(m), s)
            }
            DetectorKind::Hbos => {
                let m = Hbos::fit(x, self.bins)?;
                let s = m.score(x)?;
                (Box::new(m), s)
            }
            DetectorKind::Lof => {
                let m = Lof::fit(x, self.resolved_k())?;
                let s = m.training_scores();
                (Box::new(m), s)
            }
            DetectorKind::Knn => {
                let m = Knn::fit(x, self.resolved_k())?;
                let s = m.training_scores();
                (Box::new(m), s)
            }
            DetectorKind::Pca => {
                let components = self
                    .components
                    .unwrap_or_else(|| (ds.n_features() / 2).max(1));
                let m = Pca::fit(x, components)?;
                let s = m.score(x)?;
                (Box::new(m), s)
            }
        };
        Ok(FittedDetector {
            model,
            training_scores: ScoreVector::raw(scores),
        })
    }

    pub fn fit_score(&self, ds: &Dataset) -> Result<ScoreVector, DetectorError> {
        Ok(self.fit(ds)?.training_scores)
    }
}

/// A fitted detector that can score arbitrary points with the training
/// dimensionality. Fitted scorers are immutable.
pub trait Scorer: Send + Sync {
    fn score(&self, points: ArrayView2<f64>) -> Result<Vec<f64>, DetectorError>;
}

pub struct FittedDetector {
    pub model: Box<dyn Scorer>,
    /// Raw scores of the training rows (self excluded for neighbor methods).
    pub training_scores: ScoreVector,
}

impl fmt::Debug for FittedDetector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FittedDetector")
            .field("training_scores", &self.training_scores)
            .finish_non_exhaustive()
    }
}

pub(crate) fn check_dims(expected: usize, points: ArrayView2<f64>) -> Result<(), DetectorError> {
    if points.ncols() != expected {
        return Err(DetectorError::DimensionMismatch {
            expected,
            got: points.ncols(),
        });
    }
    Ok(())
}
