//! Pseudo-label history, per-instance variance and the additive correction.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BoosterError;
use crate::detectors::{minmax_values, ScoreVector};

/// Column-wise history of pseudo-label vectors, each normalized and of length n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelMatrix {
    n: usize,
    columns: Vec<Vec<f64>>,
}

impl PseudoLabelMatrix {
    /// Starts the history from an already normalized first column.
    pub fn new(first: ScoreVector) -> Result<Self, BoosterError> {
        let mut m = Self {
            n: first.len(),
            columns: Vec::new(),
        };
        m.push(first)?;
        Ok(m)
    }

    pub fn push(&mut self, column: ScoreVector) -> Result<(), BoosterError> {
        if !column.is_normalized() {
            return Err(BoosterError::NotNormalized);
        }
        if column.len() != self.n {
            return Err(BoosterError::LengthMismatch {
                expected: self.n,
                got: column.len(),
            });
        }
        self.columns.push(column.into_values());
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, t: usize) -> &[f64] {
        &self.columns[t]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn latest(&self) -> &[f64] {
        self.columns.last().expect("history is never empty")
    }

    /// n rows by t columns, header `y1..yt`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (1..=self.columns.len()).map(|t| format!("y{t}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.n {
            let row: Vec<String> = self.columns.iter().map(|c| c[i].to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    }
}

/// Per-instance population variance, non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarianceVector(Vec<f64>);

impl VarianceVector {
    pub fn new(values: Vec<f64>) -> Option<Self> {
        values.iter().all(|v| *v >= 0.0).then_some(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len().max(1) as f64
    }
}

/// For each instance, the population variance (divide by count) of its
/// label history together with the current prediction.
pub fn per_instance_variance(
    history: &PseudoLabelMatrix,
    current: &[f64],
) -> Result<VarianceVector, BoosterError> {
    if current.len() != history.n_samples() {
        return Err(BoosterError::LengthMismatch {
            expected: history.n_samples(),
            got: current.len(),
        });
    }
    let values = (0..history.n_samples())
        .map(|i| {
            // Welford; each increment is a product of same-signed deviations,
            // so identical entries give exactly zero.
            let mut mean = 0.0;
            let mut m2 = 0.0;
            let entries = history.columns().iter().map(|c| c[i]).chain(std::iter::once(current[i]));
            for (k, x) in entries.enumerate() {
                let delta = x - mean;
                mean += delta / (k + 1) as f64;
                m2 += delta * (x - mean);
            }
            (m2 / (history.n_columns() + 1) as f64).max(0.0)
        })
        .collect();
    Ok(VarianceVector(values))
}

/// Adds the variance to the labels and renormalizes to [0, 1].
pub fn update_pseudo_labels(y: &[f64], v: &VarianceVector) -> Result<ScoreVector, BoosterError> {
    if y.len() != v.len() {
        return Err(BoosterError::LengthMismatch {
            expected: y.len(),
            got: v.len(),
        });
    }
    if y.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(BoosterError::NotNormalized);
    }
    let shifted: Vec<f64> = y.iter().zip(v.values()).map(|(a, b)| a + b).collect();
    Ok(ScoreVector::normalized(minmax_values(&shifted)).expect("min-max output lies in [0, 1]"))
}

/// Unnormalized updated scores of the four instance archetypes, ordered as
/// true positive, false positive, false negative, true negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseScores {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub tn: f64,
}

impl CaseScores {
    /// `labels + variance` for the archetypes `[TP, FP, FN, TN]`.
    pub fn after_update(labels: [f64; 4], variance: [f64; 4]) -> Self {
        Self {
            tp: labels[0] + variance[0],
            fp: labels[1] + variance[1],
            fn_: labels[2] + variance[2],
            tn: labels[3] + variance[3],
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.tp, self.fp, self.fn_, self.tn]
    }

    /// Min-max normalized scores, in the same order.
    pub fn normalized(&self) -> [f64; 4] {
        let v = minmax_values(&self.as_array());
        [v[0], v[1], v[2], v[3]]
    }
}
