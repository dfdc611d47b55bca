//! Histogram-based outlier score: per-feature equal-width histograms, with
//! the negative log densities summed across features.

use ndarray::ArrayView2;

use super::{check_dims, DetectorError, Scorer, ScoreVector};
use crate::data::Dataset;

#[derive(Debug, Clone)]
struct FeatureHistogram {
    min: f64,
    width: f64,
    /// Relative frequency per bin, floored so empty bins stay finite.
    density: Vec<f64>,
    floor: f64,
}

impl FeatureHistogram {
    fn density_at(&self, v: f64) -> f64 {
        let bins = self.density.len();
        if self.width == 0.0 {
            return if v == self.min { self.density[0] } else { self.floor };
        }
        let max = self.min + self.width * bins as f64;
        if v < self.min || v > max {
            return self.floor;
        }
        let bin = (((v - self.min) / self.width) as usize).min(bins - 1);
        self.density[bin]
    }
}

#[derive(Debug, Clone)]
pub struct Hbos {
    features: Vec<FeatureHistogram>,
}

impl Hbos {
    pub fn fit(x: ArrayView2<f64>, bins: usize) -> Result<Self, DetectorError> {
        if bins == 0 {
            return Err(DetectorError::InvalidParam("bins must be positive".into()));
        }
        let n = x.nrows();
        if n == 0 {
            return Err(DetectorError::TooFewRows(0));
        }
        let floor = 1.0 / (2.0 * n as f64 * bins as f64);
        let features = x
            .columns()
            .into_iter()
            .map(|col| {
                let (min, max) = col
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                let width = (max - min) / bins as f64;
                let mut counts = vec![0usize; bins];
                for &v in col {
                    let bin = if width > 0.0 {
                        (((v - min) / width) as usize).min(bins - 1)
                    } else {
                        0
                    };
                    counts[bin] += 1;
                }
                let density = counts
                    .into_iter()
                    .map(|c| (c as f64 / n as f64).max(floor))
                    .collect();
                FeatureHistogram {
                    min,
                    width,
                    density,
                    floor,
                }
            })
            .collect();
        Ok(Self { features })
    }
}

impl Scorer for Hbos {
    fn score(&self, points: ArrayView2<f64>) -> Result<Vec<f64>, DetectorError> {
        check_dims(self.features.len(), points)?;
        Ok(points
            .rows()
            .into_iter()
            .map(|p| {
                self.features
                    .iter()
                    .zip(p.iter())
                    .map(|(h, &v)| -h.density_at(v).ln())
                    .sum()
            })
            .collect())
    }
}

pub fn fit_score_hbos(ds: &Dataset, bins: usize) -> Result<ScoreVector, DetectorError> {
    let model = Hbos::fit(ds.features.view(), bins)?;
    Ok(ScoreVector::raw(model.score(ds.features.view())?))
}
