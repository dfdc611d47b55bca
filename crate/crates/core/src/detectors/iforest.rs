//! Isolation forest: random axis-aligned splits isolate anomalies in fewer
//! steps, so short average path lengths mean high scores.

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;

use super::{check_dims, DetectorError, Scorer, ScoreVector};
use crate::data::Dataset;
use crate::rng::{self, StreamRng};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average path length of an unsuccessful BST search over `m` points, c(m).
pub fn average_path_length(m: usize) -> f64 {
    match m {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = m as f64;
            2.0 * ((m - 1.0).ln() + EULER_GAMMA) - 2.0 * (m - 1.0) / m
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { size: usize },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct IsolationTree {
    nodes: Vec<Node>,
}

impl IsolationTree {
    fn build(x: ArrayView2<f64>, sample: Vec<usize>, height_limit: usize, rng: &mut StreamRng) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        tree.grow(x, sample, 0, height_limit, rng);
        tree
    }

    fn grow(
        &mut self,
        x: ArrayView2<f64>,
        rows: Vec<usize>,
        depth: usize,
        height_limit: usize,
        rng: &mut StreamRng,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if depth >= height_limit || rows.len() <= 1 {
            return id;
        }

        // Only features that still vary inside the node can split it.
        let ranges: Vec<(usize, f64, f64)> = (0..x.ncols())
            .filter_map(|j| {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(x[[i, j]]), hi.max(x[[i, j]]))
                });
                (hi > lo).then_some((j, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng::index_below(rng, ranges.len())];
        let threshold = rng::uniform_range(rng, lo, hi);
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| x[[i, feature]] <= threshold);

        let left = self.grow(x, left_rows, depth + 1, height_limit, rng);
        let right = self.grow(x, right_rows, depth + 1, height_limit, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn path_length(&self, point: ArrayView1<f64>) -> f64 {
        let mut node = 0;
        let mut depth = 0usize;
        loop {
            match self.nodes[node] {
                Node::Leaf { size } => return depth as f64 + average_path_length(size),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if point[feature] <= threshold { left } else { right };
                    depth += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct IsolationForest {
    trees: Vec<IsolationTree>,
    subsample: usize,
    n_features: usize,
}

impl IsolationForest {
    /// Grows `trees` trees on subsamples of `min(subsample, n)` rows.
    pub fn fit(
        x: ArrayView2<f64>,
        trees: usize,
        subsample: usize,
        seed: u64,
    ) -> Result<Self, DetectorError> {
        if trees == 0 || subsample == 0 {
            return Err(DetectorError::InvalidParam(
                "trees and subsample must be positive".into(),
            ));
        }
        let n = x.nrows();
        if n < 2 {
            return Err(DetectorError::TooFewRows(n));
        }
        let subsample = subsample.min(n);
        let height_limit = (subsample as f64).log2().ceil() as usize;

        if x.rows().into_iter().all(|r| r == x.row(0)) {
            log::warn!("isolation forest: all {n} rows are identical, scores will be constant");
        }

        let trees = (0..trees as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::stream(rng::derive_seed(seed, t));
                let mut idx: Vec<usize> = (0..n).collect();
                // Partial Fisher-Yates: the first `subsample` slots become the sample.
                for i in 0..subsample {
                    let j = i + rng::index_below(&mut rng, n - i);
                    idx.swap(i, j);
                }
                idx.truncate(subsample);
                IsolationTree::build(x, idx, height_limit, &mut rng)
            })
            .collect();

        Ok(Self {
            trees,
            subsample,
            n_features: x.ncols(),
        })
    }

    pub fn subsample(&self) -> usize {
        self.subsample
    }
}

impl Scorer for IsolationForest {
    fn score(&self, points: ArrayView2<f64>) -> Result<Vec<f64>, DetectorError> {
        check_dims(self.n_features, points)?;
        let norm = average_path_length(self.subsample);
        Ok(points
            .rows()
            .into_iter()
            .map(|p| {
                let mean_path =
                    self.trees.iter().map(|t| t.path_length(p)).sum::<f64>() / self.trees.len() as f64;
                if norm > 0.0 {
                    2f64.powf(-mean_path / norm)
                } else {
                    // A one-point subsample cannot isolate anything.
                    0.5
                }
            })
            .collect())
    }
}

pub fn fit_score_iforest(
    ds: &Dataset,
    trees: usize,
    subsample: usize,
    seed: u64,
) -> Result<ScoreVector, DetectorError> {
    let model = IsolationForest::fit(ds.features.view(), trees, subsample, seed)?;
    Ok(ScoreVector::raw(model.score(ds.features.view())?))
}
