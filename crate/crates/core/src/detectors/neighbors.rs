//! Exact nearest-neighbor detectors: k-th neighbor distance (KNN) and the
//! local outlier factor (LOF). Neighbor searches are brute force, Euclidean,
//! with distance ties broken by the lower row index.

use std::cmp::Ordering;

use ndarray::{ArrayView1, ArrayView2, Array2};
use rayon::prelude::*;

use super::{check_dims, DetectorError, Scorer, ScoreVector};
use crate::data::Dataset;

/// Floor on reachability distances so duplicated points keep finite densities.
pub const LOF_MIN_REACH: f64 = 1e-12;

pub fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` nearest rows of `data` to `query` as `(distance, row)` pairs in
/// ascending order, skipping row `exclude`.
pub fn k_nearest(
    data: ArrayView2<f64>,
    query: ArrayView1<f64>,
    k: usize,
    exclude: Option<usize>,
) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = data
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, row)| (euclidean(query, row), i))
        .collect();
    if k < all.len() {
        all.select_nth_unstable_by(k, by_distance_then_index);
        all.truncate(k);
    }
    all.sort_unstable_by(by_distance_then_index);
    all
}

fn check_k(k: usize, n: usize) -> Result<(), DetectorError> {
    if k == 0 {
        return Err(DetectorError::InvalidParam("k must be positive".into()));
    }
    if k >= n {
        return Err(DetectorError::KTooLarge { k, n });
    }
    Ok(())
}

/// Neighbor lists of every training row (self excluded).
fn training_neighbors(x: ArrayView2<f64>, k: usize) -> Vec<Vec<(f64, usize)>> {
    (0..x.nrows())
        .into_par_iter()
        .map(|i| k_nearest(x, x.row(i), k, Some(i)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Knn {
    data: Array2<f64>,
    k: usize,
    training: Vec<f64>,
}

impl Knn {
    pub fn fit(x: ArrayView2<f64>, k: usize) -> Result<Self, DetectorError> {
        check_k(k, x.nrows())?;
        let training = training_neighbors(x, k)
            .into_iter()
            .map(|nb| nb[k - 1].0)
            .collect();
        Ok(Self {
            data: x.to_owned(),
            k,
            training,
        })
    }

    pub fn training_scores(&self) -> Vec<f64> {
        self.training.clone()
    }
}

impl Scorer for Knn {
    fn score(&self, points: ArrayView2<f64>) -> Result<Vec<f64>, DetectorError> {
        check_dims(self.data.ncols(), points)?;
        Ok((0..points.nrows())
            .into_par_iter()
            .map(|i| k_nearest(self.data.view(), points.row(i), self.k, None)[self.k - 1].0)
            .collect())
    }
}

pub fn fit_score_knn(ds: &Dataset, k: usize) -> Result<ScoreVector, DetectorError> {
    Ok(ScoreVector::raw(Knn::fit(ds.features.view(), k)?.training_scores()))
}

#[derive(Debug, Clone)]
pub struct Lof {
    data: Array2<f64>,
    k: usize,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
    training: Vec<f64>,
}

impl Lof {
    pub fn fit(x: ArrayView2<f64>, k: usize) -> Result<Self, DetectorError> {
        check_k(k, x.nrows())?;
        let neighbors = training_neighbors(x, k);
        let k_distance: Vec<f64> = neighbors.iter().map(|nb| nb[k - 1].0).collect();
        let lrd: Vec<f64> = neighbors
            .iter()
            .map(|nb| local_reachability_density(nb, &k_distance))
            .collect();
        let training = neighbors
            .iter()
            .zip(&lrd)
            .map(|(nb, &own)| mean_neighbor_lrd(nb, &lrd) / own)
            .collect();
        Ok(Self {
            data: x.to_owned(),
            k,
            k_distance,
            lrd,
            training,
        })
    }

    pub fn training_scores(&self) -> Vec<f64> {
        self.training.clone()
    }
}

fn local_reachability_density(neighbors: &[(f64, usize)], k_distance: &[f64]) -> f64 {
    let mean_reach = neighbors
        .iter()
        .map(|&(d, j)| d.max(k_distance[j]).max(LOF_MIN_REACH))
        .sum::<f64>()
        / neighbors.len() as f64;
    1.0 / mean_reach
}

fn mean_neighbor_lrd(neighbors: &[(f64, usize)], lrd: &[f64]) -> f64 {
    neighbors.iter().map(|&(_, j)| lrd[j]).sum::<f64>() / neighbors.len() as f64
}

impl Scorer for Lof {
    fn score(&self, points: ArrayView2<f64>) -> Result<Vec<f64>, DetectorError> {
        check_dims(self.data.ncols(), points)?;
        Ok((0..points.nrows())
            .into_par_iter()
            .map(|i| {
                let nb = k_nearest(self.data.view(), points.row(i), self.k, None);
                mean_neighbor_lrd(&nb, &self.lrd) / local_reachability_density(&nb, &self.k_distance)
            })
            .collect())
    }
}

pub fn fit_score_lof(ds: &Dataset, k: usize) -> Result<ScoreVector, DetectorError> {
    Ok(ScoreVector::raw(Lof::fit(ds.features.view(), k)?.training_scores()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticKind};
    use crate::rng;
    use ndarray::array;

    fn dataset(x: Array2<f64>) -> Dataset {
        Dataset::new("t", x, None).unwrap()
    }

    /// Textbook LOF over a full distance matrix, neighbors chosen by sorting
    /// each row completely.
    fn brute_force_lof(x: &Array2<f64>, k: usize) -> Vec<f64> {
        let n = x.nrows();
        let dist = |i: usize, j: usize| -> f64 {
            (0..x.ncols()).map(|c| (x[[i, c]] - x[[j, c]]).powi(2)).sum::<f64>().sqrt()
        };
        let knn: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                others.sort_by(|&a, &b| dist(i, a).partial_cmp(&dist(i, b)).unwrap().then(a.cmp(&b)));
                others.truncate(k);
                others
            })
            .collect();
        let kdist: Vec<f64> = (0..n).map(|i| dist(i, knn[i][k - 1])).collect();
        let lrd: Vec<f64> = (0..n)
            .map(|i| {
                let s: f64 = knn[i].iter().map(|&j| dist(i, j).max(kdist[j]).max(1e-12)).sum();
                k as f64 / s
            })
            .collect();
        (0..n)
            .map(|i| knn[i].iter().map(|&j| lrd[j]).sum::<f64>() / (k as f64 * lrd[i]))
            .collect()
    }

    #[test]
    fn knn_collinear_equidistant() {
        let ds = dataset(array![[0.0, 0.0], [1.5, 0.0], [3.0, 0.0]]);
        let s = fit_score_knn(&ds, 1).unwrap();
        assert_eq!(s.values(), &[1.5, 1.5, 1.5]);
    }

    #[test]
    fn knn_isolated_point_is_max() {
        let ds = generate_synthetic(SyntheticKind::Clustered, 60, 0.05, 2).unwrap();
        let mut x = ds.features.clone();
        x[[0, 0]] = 100.0;
        let s = fit_score_knn(&dataset(x), 5).unwrap();
        let max = s.values().iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(s.values()[0], max);
    }

    #[test]
    fn k_must_be_below_n() {
        let ds = dataset(array![[0.0], [1.0], [2.0]]);
        assert!(matches!(fit_score_knn(&ds, 3), Err(DetectorError::KTooLarge { k: 3, n: 3 })));
        assert!(matches!(fit_score_lof(&ds, 5), Err(DetectorError::KTooLarge { .. })));
        assert!(fit_score_knn(&ds, 2).is_ok());
    }

    #[test]
    fn lof_grid_interior_is_near_one() {
        let mut rows = Vec::new();
        for i in 0..11 {
            for j in 0..11 {
                rows.extend([i as f64, j as f64]);
            }
        }
        let x = Array2::from_shape_vec((121, 2), rows).unwrap();
        let oracle = brute_force_lof(&x, 8);
        let s = fit_score_lof(&dataset(x), 8).unwrap();
        let center = 5 * 11 + 5;
        assert!((0.9..=1.1).contains(&s.values()[center]), "{}", s.values()[center]);
        for (a, b) in s.values().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lof_matches_brute_force_on_random_data() {
        let mut r = rng::stream(17);
        let x = Array2::from_shape_fn((70, 3), |_| rng::standard_normal(&mut r));
        let oracle = brute_force_lof(&x, 10);
        let s = fit_score_lof(&dataset(x), 10).unwrap();
        for (a, b) in s.values().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn lof_duplicates_stay_finite() {
        let ds = dataset(array![[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [0.0, 0.0]]);
        let s = fit_score_lof(&ds, 2).unwrap();
        assert!(s.is_finite());
        assert!((s.values()[0] - 1.0).abs() < 1e-9);
        assert!(s.values()[3] > 1.0);
    }

    #[test]
    fn lof_scores_new_points() {
        let ds = generate_synthetic(SyntheticKind::Local, 100, 0.1, 3).unwrap();
        let model = Lof::fit(ds.features.view(), 10).unwrap();
        let probe = array![[0.0, 0.0], [30.0, -30.0]];
        let s = model.score(probe.view()).unwrap();
        assert!(s[1] > s[0]);
        assert!(s[1] > 5.0);
    }
}
