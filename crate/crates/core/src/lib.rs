//! Unsupervised anomaly detection booster.
//!
//! A source detector's scores become pseudo labels for a small neural
//! network. After each round of training, the spread between the network's
//! prediction and the label history is added back onto the labels, which
//! pulls mislabeled anomalies up and mislabeled inliers down.
//!
//! Modules:
//! - [`data`]: datasets, CSV I/O, feature scaling, synthetic generators
//! - [`detectors`]: source detectors and score import
//! - [`nn`]: the booster network
//! - [`booster`]: the iterative correction loop and ablation strategies
//! - [`metrics`]: AUCROC, AP, variance gap, correction rate

pub mod booster;
pub mod data;
pub mod detectors;
pub mod metrics;
pub mod nn;
pub mod rng;
