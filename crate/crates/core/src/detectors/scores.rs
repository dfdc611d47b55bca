use std::fs;
use std::io::Write;
use std::path::Path;

use super::{DetectorError, ScoreVector};

/// Affine map onto [0, 1]; a constant vector maps to all 0.5.
pub fn minmax_values(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if span.is_nan() || span <= 0.0 {
        return vec![0.5; values.len()];
    }
    values
        .iter()
        .map(|&v| ((v - lo) / span).clamp(0.0, 1.0))
        .collect()
}

pub fn minmax_scale(v: &ScoreVector) -> ScoreVector {
    ScoreVector::normalized(minmax_values(v.values())).expect("min-max output lies in [0, 1]")
}

/// Reads externally produced scores: one real per line, or a single CSV
/// column whose first line may be a header.
pub fn import_scores(path: impl AsRef<Path>, n_expected: usize) -> Result<ScoreVector, DetectorError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DetectorError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut values = Vec::with_capacity(n_expected);
    for (line_no, line) in text.lines().enumerate() {
        let cell = line.trim();
        if cell.is_empty() {
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) => {
                return Err(DetectorError::NonFinite {
                    line: line_no + 1,
                    value: cell.to_owned(),
                })
            }
            Err(_) if line_no == 0 => {} // header
            Err(_) => {
                return Err(DetectorError::Parse {
                    line: line_no + 1,
                    value: cell.to_owned(),
                })
            }
        }
    }
    if values.len() != n_expected {
        return Err(DetectorError::LengthMismatch {
            expected: n_expected,
            got: values.len(),
        });
    }
    Ok(ScoreVector::raw(values))
}

/// Writes one score per line using the shortest exact decimal form.
pub fn write_scores(scores: &[f64], path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for v in scores {
        writeln!(out, "{v}")?;
    }
    out.flush()
}
