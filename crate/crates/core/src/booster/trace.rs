//! Mean rank of each teacher outcome (TP/FP/FN/TN) across the pseudo-label
//! history, showing how mislabeled instances move.

use serde::{Deserialize, Serialize};

use super::{BoosterError, BoosterResult};
use crate::data::Dataset;
use crate::metrics::{average_ranks, ThresholdRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CaseKind {
    Tp,
    Fp,
    Fn,
    Tn,
}

impl CaseKind {
    fn classify(truth: u8, flagged: u8) -> Self {
        match (truth, flagged) {
            (1, 1) => CaseKind::Tp,
            (1, _) => CaseKind::Fn,
            (_, 1) => CaseKind::Fp,
            _ => CaseKind::Tn,
        }
    }
}

/// Mean ascending rank (1 = least anomalous) per case; `None` for an empty group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRanks {
    pub tp: Option<f64>,
    pub fp: Option<f64>,
    #[serde(rename = "fn")]
    pub fn_: Option<f64>,
    pub tn: Option<f64>,
    /// Mean rank over all instances; always (n + 1) / 2.
    pub overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTrace {
    pub cases: Vec<CaseKind>,
    /// One entry per label-history column.
    pub ranks: Vec<CaseRanks>,
}

impl CorrectionTrace {
    pub fn count(&self, kind: CaseKind) -> usize {
        self.cases.iter().filter(|&&c| c == kind).count()
    }
}

/// Classifies instances by the teacher's thresholded decision, then follows
/// the mean rank of each group through the label history.
pub fn correction_trace(
    result: &BoosterResult,
    ds: &Dataset,
    rule: Option<ThresholdRule>,
) -> Result<CorrectionTrace, BoosterError> {
    let labels = ds.labels().ok_or(BoosterError::LabelsRequired)?;
    let teacher = result.teacher_labels();
    if teacher.len() != labels.len() {
        return Err(BoosterError::LengthMismatch {
            expected: labels.len(),
            got: teacher.len(),
        });
    }
    let rule = rule.unwrap_or_else(|| ThresholdRule::contamination_from_labels(labels));
    let flagged = rule.classify(teacher);
    let cases: Vec<CaseKind> = labels
        .iter()
        .zip(&flagged)
        .map(|(&t, &f)| CaseKind::classify(t, f))
        .collect();

    let ranks = result
        .label_history
        .columns()
        .iter()
        .map(|column| {
            let r = average_ranks(column);
            let mean_of = |kind: CaseKind| {
                let (sum, count) = r
                    .iter()
                    .zip(&cases)
                    .filter(|(_, &c)| c == kind)
                    .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
                (count > 0).then(|| sum / count as f64)
            };
            CaseRanks {
                tp: mean_of(CaseKind::Tp),
                fp: mean_of(CaseKind::Fp),
                fn_: mean_of(CaseKind::Fn),
                tn: mean_of(CaseKind::Tn),
                overall: r.iter().sum::<f64>() / r.len() as f64,
            }
        })
        .collect();
    Ok(CorrectionTrace { cases, ranks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::booster::{run_booster, BoosterConfig};
    use crate::data::{generate_synthetic, SyntheticKind};
    use crate::detectors::ScoreVector;

    #[test]
    fn perfect_teacher_has_only_tp_and_tn() {
        let ds = generate_synthetic(SyntheticKind::Clustered, 60, 0.1, 1).unwrap();
        let teacher = ScoreVector::raw(ds.labels().unwrap().iter().map(|&l| l as f64).collect());
        let cfg = BoosterConfig {
            iterations: 2,
            ..BoosterConfig::default()
        };
        let result = run_booster(&ds, &teacher, &cfg).unwrap();
        let trace = correction_trace(&result, &ds, None).unwrap();
        assert_eq!(trace.count(CaseKind::Fp), 0);
        assert_eq!(trace.count(CaseKind::Fn), 0);
        assert!(trace.ranks.iter().all(|r| r.fp.is_none() && r.fn_.is_none()));
        assert!(trace.ranks.iter().all(|r| r.tp.is_some() && r.tn.is_some()));
    }

    #[test]
    fn overall_mean_rank_is_midpoint() {
        let ds = generate_synthetic(SyntheticKind::Local, 80, 0.15, 2).unwrap();
        let teacher = crate::detectors::fit_score_hbos(&ds, 10).unwrap();
        let cfg = BoosterConfig {
            iterations: 3,
            ..BoosterConfig::default()
        };
        let result = run_booster(&ds, &teacher, &cfg).unwrap();
        let trace = correction_trace(&result, &ds, None).unwrap();
        assert_eq!(trace.ranks.len(), 4);
        for r in &trace.ranks {
            assert!((r.overall - 40.5).abs() < 1e-12);
        }
    }

    #[test]
    fn requires_labels() {
        let mut ds = generate_synthetic(SyntheticKind::Local, 40, 0.1, 2).unwrap();
        let teacher = crate::detectors::fit_score_hbos(&ds, 10).unwrap();
        let cfg = BoosterConfig {
            iterations: 1,
            ..BoosterConfig::default()
        };
        let result = run_booster(&ds, &teacher, &cfg).unwrap();
        ds.labels = None;
        assert!(matches!(correction_trace(&result, &ds, None), Err(BoosterError::LabelsRequired)));
    }
}
