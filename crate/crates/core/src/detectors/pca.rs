//! PCA reconstruction error: squared distance from a centered point to the
//! span of the leading principal directions.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{check_dims, DetectorError, Scorer, ScoreVector};
use crate::data::Dataset;

#[derive(Debug, Clone)]
pub struct Pca {
    mean: Array1<f64>,
    /// d x components, orthonormal columns ordered by decreasing eigenvalue.
    basis: Array2<f64>,
}

impl Pca {
    pub fn fit(x: ArrayView2<f64>, components: usize) -> Result<Self, DetectorError> {
        let (n, d) = x.dim();
        if components == 0 || components >= d {
            return Err(DetectorError::ComponentsOutOfRange { components, d });
        }
        if n < 2 {
            return Err(DetectorError::TooFewRows(n));
        }
        let mean = x.mean_axis(Axis(0)).expect("n >= 2");
        let centered = &x - &mean;
        let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
        let eigen = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));

        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eigen.eigenvalues[b]
                .total_cmp(&eigen.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let basis = Array2::from_shape_fn((d, components), |(i, c)| eigen.eigenvectors[(i, order[c])]);
        Ok(Self { mean, basis })
    }

    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }
}

impl Scorer for Pca {
    fn score(&self, points: ArrayView2<f64>) -> Result<Vec<f64>, DetectorError> {
        check_dims(self.mean.len(), points)?;
        let centered = &points - &self.mean;
        let reconstructed = centered.dot(&self.basis).dot(&self.basis.t());
        let residual = &centered - &reconstructed;
        Ok(residual
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v * v).sum())
            .collect())
    }
}

pub fn fit_score_pca(ds: &Dataset, components: usize) -> Result<ScoreVector, DetectorError> {
    let model = Pca::fit(ds.features.view(), components)?;
    Ok(ScoreVector::raw(model.score(ds.features.view())?))
}
