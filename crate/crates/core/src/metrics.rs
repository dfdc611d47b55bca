//! Rank metrics (AUCROC, average precision) and the booster diagnostics:
//! class variance gap and error-correction rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("labels must contain both classes")]
    SingleClass,
    #[error("no positive labels")]
    NoPositives,
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("mean variance of anomalies is zero")]
    ZeroAnomalyVariance,
}

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    Ok(())
}

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    (pos, labels.len() - pos)
}

/// Ascending ranks (1-based) with tied values sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Probability that a random anomaly outranks a random inlier, ties counted
/// as one half (Mann-Whitney U over average ranks).
pub fn aucroc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    check_lengths(scores, labels)?;
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Indices ordered by descending score, ties by ascending row index.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Stepwise area under the precision-recall curve over the descending
/// ranking; each position is its own cut-off.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    check_lengths(scores, labels)?;
    let (n_pos, _) = class_counts(labels);
    if n_pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &i) in descending_order(scores).iter().enumerate() {
        if labels[i] == 1 {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

/// `(mean_normal - mean_abnormal) / mean_abnormal`; negative when anomalies
/// carry more variance.
pub fn variance_gap(variance: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    check_lengths(variance, labels)?;
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mean = |class: u8, count: usize| {
        variance
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == class)
            .map(|(v, _)| v)
            .sum::<f64>()
            / count as f64
    };
    let abnormal = mean(1, n_pos);
    if abnormal == 0.0 {
        return Err(MetricError::ZeroAnomalyVariance);
    }
    Ok((mean(0, n_neg) - abnormal) / abnormal)
}

/// How scores are turned into hard anomaly decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum ThresholdRule {
    /// Flag the `round(q * n)` highest scores (ties to the lower row index).
    Contamination { rate: f64 },
    /// Flag min-max normalized scores at or above the cut-off.
    Fixed { cutoff: f64 },
}

impl ThresholdRule {
    /// The contamination rule at the labeled anomaly rate.
    pub fn contamination_from_labels(labels: &[u8]) -> Self {
        let (pos, _) = class_counts(labels);
        ThresholdRule::Contamination {
            rate: pos as f64 / labels.len().max(1) as f64,
        }
    }

    pub fn classify(&self, scores: &[f64]) -> Vec<u8> {
        match *self {
            ThresholdRule::Contamination { rate } => {
                let flagged = ((scores.len() as f64 * rate).round() as usize).min(scores.len());
                let mut out = vec![0u8; scores.len()];
                for &i in descending_order(scores).iter().take(flagged) {
                    out[i] = 1;
                }
                out
            }
            ThresholdRule::Fixed { cutoff } => crate::detectors::minmax_values(scores)
                .into_iter()
                .map(|v| u8::from(v >= cutoff))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRate {
    pub rate: f64,
    pub corrected: usize,
    pub teacher_errors: usize,
}

impl CorrectionRate {
    /// True when the teacher made no errors and the rate is 1 by convention.
    pub fn is_vacuous(&self) -> bool {
        self.teacher_errors == 0
    }
}

/// Share of the teacher's thresholded errors that the booster gets right.
pub fn correction_rate(
    teacher: &[f64],
    booster: &[f64],
    labels: &[u8],
    rule: ThresholdRule,
) -> Result<CorrectionRate, MetricError> {
    check_lengths(teacher, labels)?;
    check_lengths(booster, labels)?;
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let t = rule.classify(teacher);
    let b = rule.classify(booster);
    let mut teacher_errors = 0;
    let mut corrected = 0;
    for i in 0..labels.len() {
        if t[i] != labels[i] {
            teacher_errors += 1;
            if b[i] == labels[i] {
                corrected += 1;
            }
        }
    }
    let rate = if teacher_errors == 0 {
        1.0
    } else {
        corrected as f64 / teacher_errors as f64
    };
    Ok(CorrectionRate {
        rate,
        corrected,
        teacher_errors,
    })
}

/// Evaluation summary with fixed JSON field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aucroc: f64,
    pub ap: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub correction_rate: Option<f64>,
    pub variance_gap: Option<f64>,
}

impl EvalReport {
    pub fn evaluate(scores: &[f64], labels: &[u8]) -> Result<Self, MetricError> {
        let (n_pos, n_neg) = class_counts(labels);
        Ok(Self {
            aucroc: aucroc(scores, labels)?,
            ap: average_precision(scores, labels)?,
            n_pos,
            n_neg,
            correction_rate: None,
            variance_gap: None,
        })
    }
}
