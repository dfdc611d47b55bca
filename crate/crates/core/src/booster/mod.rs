//! The boosting loop.
//!
//! Starting from the min-max normalized teacher scores, each iteration
//! trains the fold networks on the current pseudo labels, measures
//! per-instance variance between the label history and the out-of-fold
//! predictions, and adds it to the labels before renormalizing. The ablation
//! strategies reuse the same machinery with parts of the loop removed.

mod labels;
mod trace;

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::detectors::{minmax_scale, minmax_values, ScoreVector};
use crate::metrics::{self, MetricError};
use crate::nn::{MlpModel, NnError, TrainSpec};
use crate::rng;

pub use labels::{
    per_instance_variance, update_pseudo_labels, CaseScores, PseudoLabelMatrix, VarianceVector,
};
pub use trace::{correction_trace, CaseKind, CaseRanks, CorrectionTrace};

#[derive(Debug, Error)]
pub enum BoosterError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("teacher scores contain non-finite values")]
    NonFiniteTeacher,
    #[error("pseudo labels must be normalized to [0, 1]")]
    NotNormalized,
    #[error("invalid booster config: {0}")]
    InvalidConfig(String),
    #[error("ground-truth labels are required")]
    LabelsRequired,
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// The full booster and its four ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Iterative training with variance correction of the pseudo labels.
    Uadb,
    /// One training pass on the static teacher labels.
    Naive,
    /// One training pass; scores are the spread between booster and teacher.
    Discrepancy,
    /// Iterative training on the booster's own normalized output.
    #[serde(rename = "self")]
    SelfTraining,
    /// Self training; scores are the final spread between booster and teacher.
    DiscrepancyStar,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Naive,
        Strategy::Discrepancy,
        Strategy::SelfTraining,
        Strategy::DiscrepancyStar,
        Strategy::Uadb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Uadb => "uadb",
            Strategy::Naive => "naive",
            Strategy::Discrepancy => "discrepancy",
            Strategy::SelfTraining => "self",
            Strategy::DiscrepancyStar => "discrepancy_star",
        }
    }

    fn is_iterative(self) -> bool {
        matches!(self, Strategy::Uadb | Strategy::SelfTraining | Strategy::DiscrepancyStar)
    }

    fn scores_by_discrepancy(self) -> bool {
        matches!(self, Strategy::Discrepancy | Strategy::DiscrepancyStar)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = BoosterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == key)
            .ok_or_else(|| BoosterError::UnknownStrategy(s.to_owned()))
    }
}

/// How final scores are produced from the fold networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inference {
    /// Average of every fold network.
    #[default]
    Averaged,
    /// Each instance scored only by the network that never trained on it.
    HeldOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoosterConfig {
    /// Number of booster iterations T.
    pub iterations: usize,
    /// Cross-fitting folds; 1 trains a single network on all rows.
    pub fold_count: usize,
    pub strategy: Strategy,
    pub train: TrainSpec,
    /// Re-initialize the networks at every iteration instead of warm-starting.
    pub reinit_per_iteration: bool,
    pub inference: Inference,
    pub seed: u64,
}

impl Default for BoosterConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            fold_count: 3,
            strategy: Strategy::Uadb,
            train: TrainSpec::default(),
            reinit_per_iteration: false,
            inference: Inference::Averaged,
            seed: 0,
        }
    }
}

impl BoosterConfig {
    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n: usize) -> Result<(), BoosterError> {
        if self.iterations == 0 {
            return Err(BoosterError::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.fold_count == 0 {
            return Err(BoosterError::InvalidConfig("fold count must be >= 1".into()));
        }
        if self.fold_count > 1 && self.fold_count > n {
            return Err(BoosterError::InvalidConfig(format!(
                "{} folds for {n} rows",
                self.fold_count
            )));
        }
        self.train.validate()?;
        Ok(())
    }
}

/// Label-dependent diagnostics recorded after each iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Of the inference-time booster scores after this iteration.
    pub aucroc: f64,
    pub ap: f64,
    /// Of the pseudo labels produced by this iteration.
    pub label_aucroc: f64,
    pub variance_gap: Option<f64>,
}

/// Trained fold networks plus the fold of every training row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEnsemble {
    pub models: Vec<MlpModel>,
    /// Fold index per training row (all zero without cross-fitting).
    pub fold_of: Vec<usize>,
}

impl FoldEnsemble {
    /// Mean output of all fold networks.
    pub fn predict_averaged(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, NnError> {
        let mut sum = vec![0.0; x.nrows()];
        for m in &self.models {
            for (s, p) in sum.iter_mut().zip(m.forward(x)?) {
                *s += p;
            }
        }
        let k = self.models.len() as f64;
        Ok(sum.into_iter().map(|s| s / k).collect())
    }

    /// Training rows scored by the network that held them out.
    pub fn predict_held_out(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, NnError> {
        if self.models.len() == 1 {
            return self.models[0].forward(x);
        }
        let mut out = vec![0.0; x.nrows()];
        for (k, model) in self.models.iter().enumerate() {
            let rows: Vec<usize> = (0..x.nrows()).filter(|&i| self.fold_of[i] == k).collect();
            let preds = model.forward(x.select(Axis(0), &rows).view())?;
            for (&i, p) in rows.iter().zip(preds) {
                out[i] = p;
            }
        }
        Ok(out)
    }

    fn predict(&self, x: ArrayView2<f64>, mode: Inference) -> Result<Vec<f64>, NnError> {
        match mode {
            Inference::Averaged => self.predict_averaged(x),
            Inference::HeldOut => self.predict_held_out(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoosterResult {
    pub final_scores: ScoreVector,
    pub label_history: PseudoLabelMatrix,
    pub variance_history: Vec<VarianceVector>,
    /// Present when the dataset carries ground-truth labels.
    pub iteration_metrics: Option<Vec<IterationMetrics>>,
    #[serde(skip)]
    pub ensemble: Option<FoldEnsemble>,
}

impl BoosterResult {
    /// The normalized teacher scores the run started from.
    pub fn teacher_labels(&self) -> &[f64] {
        self.label_history.column(0)
    }
}

/// Deterministic folds: a seeded shuffle of row indices dealt round-robin.
pub fn assign_folds(n: usize, fold_count: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::stream(rng::derive_seed(seed, FOLD_STREAM));
    rng::shuffle(&mut r, &mut order);
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % fold_count;
    }
    fold_of
}

const FOLD_STREAM: u64 = 0xF01D;
const INIT_STREAM: u64 = 0x1417;
const SHUFFLE_STREAM: u64 = 0x5A0F;

/// Population standard deviation of the pair `{a, b}`.
fn pair_spread(a: f64, b: f64) -> f64 {
    (a - b).abs() / 2.0
}

pub fn run_booster(
    ds: &Dataset,
    teacher: &ScoreVector,
    cfg: &BoosterConfig,
) -> Result<BoosterResult, BoosterError> {
    let n = ds.n_samples();
    if teacher.len() != n {
        return Err(BoosterError::LengthMismatch {
            expected: n,
            got: teacher.len(),
        });
    }
    if !teacher.is_finite() {
        return Err(BoosterError::NonFiniteTeacher);
    }
    cfg.validate(n)?;

    let x = ds.features.view();
    let folds = cfg.fold_count;
    let fold_of = if folds > 1 {
        assign_folds(n, folds, cfg.seed)
    } else {
        vec![0; n]
    };
    let train_rows: Vec<Vec<usize>> = (0..folds)
        .map(|k| (0..n).filter(|&i| folds == 1 || fold_of[i] != k).collect())
        .collect();
    let init_seed = |k: usize, t: usize| {
        let base = rng::derive_seed(cfg.seed, INIT_STREAM + k as u64);
        if cfg.reinit_per_iteration {
            rng::derive_seed(base, t as u64)
        } else {
            base
        }
    };
    let mut ensemble = FoldEnsemble {
        models: (0..folds).map(|k| MlpModel::new(ds.n_features(), init_seed(k, 0))).collect(),
        fold_of,
    };

    let teacher_labels = minmax_scale(teacher);
    let mut history = PseudoLabelMatrix::new(teacher_labels.clone())?;
    let mut variance_history = Vec::new();
    let mut diagnostics = ds.labels().map(|_| Vec::new());
    let rounds = if cfg.strategy.is_iterative() {
        cfg.iterations
    } else {
        1
    };

    let mut inference = Vec::new();
    for t in 0..rounds {
        if cfg.reinit_per_iteration && t > 0 {
            for (k, m) in ensemble.models.iter_mut().enumerate() {
                *m = MlpModel::new(ds.n_features(), init_seed(k, t));
            }
        }
        let targets = history.latest().to_vec();
        ensemble
            .models
            .par_iter_mut()
            .zip(&train_rows)
            .enumerate()
            .map(|(k, (model, rows))| {
                let spec = TrainSpec {
                    shuffle_seed: rng::derive_seed(
                        rng::derive_seed(cfg.seed, SHUFFLE_STREAM + k as u64),
                        t as u64,
                    ),
                    ..cfg.train.clone()
                };
                let y: Vec<f64> = rows.iter().map(|&i| targets[i]).collect();
                model.train(x.select(Axis(0), rows).view(), &y, &spec).map(|_| ())
            })
            .collect::<Result<Vec<()>, NnError>>()?;

        let held_out = ensemble.predict_held_out(x)?;
        let variance = per_instance_variance(&history, &held_out)?;
        let next = match cfg.strategy {
            Strategy::Uadb => Some(update_pseudo_labels(history.latest(), &variance)?),
            Strategy::SelfTraining | Strategy::DiscrepancyStar => {
                Some(ScoreVector::normalized(minmax_values(&held_out)).expect("normalized"))
            }
            Strategy::Naive | Strategy::Discrepancy => None,
        };
        inference = ensemble.predict(x, cfg.inference)?;

        if let (Some(diag), Some(labels)) = (diagnostics.as_mut(), ds.labels()) {
            let scores = final_scores(cfg.strategy, &inference, teacher_labels.values());
            let label_aucroc = match &next {
                Some(col) => metrics::aucroc(col.values(), labels)?,
                None => metrics::aucroc(history.latest(), labels)?,
            };
            diag.push(IterationMetrics {
                iteration: t + 1,
                aucroc: metrics::aucroc(&scores, labels)?,
                ap: metrics::average_precision(&scores, labels)?,
                label_aucroc,
                variance_gap: metrics::variance_gap(variance.values(), labels).ok(),
            });
        }
        variance_history.push(variance);
        if let Some(col) = next {
            history.push(col)?;
        }
    }

    let final_scores = ScoreVector::normalized(final_scores(
        cfg.strategy,
        &inference,
        teacher_labels.values(),
    ))
    .expect("normalized");
    Ok(BoosterResult {
        final_scores,
        label_history: history,
        variance_history,
        iteration_metrics: diagnostics,
        ensemble: Some(ensemble),
    })
}

fn final_scores(strategy: Strategy, booster: &[f64], teacher: &[f64]) -> Vec<f64> {
    if strategy.scores_by_discrepancy() {
        let spread: Vec<f64> = booster
            .iter()
            .zip(teacher)
            .map(|(&b, &t)| pair_spread(b, t))
            .collect();
        minmax_values(&spread)
    } else {
        minmax_values(booster)
    }
}
