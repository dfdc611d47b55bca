use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};
use crate::rng::{self, StreamRng};

pub const DEFAULT_SAMPLES: usize = 300;
pub const DEFAULT_ANOMALY_RATE: f64 = 0.15;

/// Center of the clustered anomaly blob.
const CLUSTER_OFFSET: f64 = 6.0;
/// Half-width of the square global anomalies are scattered over.
const GLOBAL_HALF_WIDTH: f64 = 5.0;
/// Standard deviation of local anomalies (variance 4).
const LOCAL_SCALE: f64 = 2.0;
/// Noise on the second coordinate of dependency inliers.
const DEPENDENCY_NOISE: f64 = 0.1;

/// The four two-dimensional anomaly regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Clustered,
    Global,
    Local,
    Dependency,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 4] = [
        SyntheticKind::Clustered,
        SyntheticKind::Global,
        SyntheticKind::Local,
        SyntheticKind::Dependency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticKind::Clustered => "clustered",
            SyntheticKind::Global => "global",
            SyntheticKind::Local => "local",
            SyntheticKind::Dependency => "dependency",
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntheticKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| DataError::InvalidSynthetic(format!("unknown synthetic kind {s:?}")))
    }
}

/// Generates `n` two-dimensional samples of which `round(n * anomaly_rate)`
/// are anomalies of the given kind. Inliers come first, anomalies last.
pub fn generate_synthetic(
    kind: SyntheticKind,
    n: usize,
    anomaly_rate: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if n < 20 {
        return Err(DataError::InvalidSynthetic(format!("n must be >= 20, got {n}")));
    }
    if !(anomaly_rate > 0.0 && anomaly_rate < 0.5) {
        return Err(DataError::InvalidSynthetic(format!(
            "anomaly rate must lie in (0, 0.5), got {anomaly_rate}"
        )));
    }
    let n_anomalies = (n as f64 * anomaly_rate).round() as usize;
    let n_inliers = n - n_anomalies;

    let mut rng = rng::stream(seed);
    let mut values = Vec::with_capacity(2 * n);
    for _ in 0..n_inliers {
        let (a, b) = inlier(kind, &mut rng);
        values.extend([a, b]);
    }
    for _ in 0..n_anomalies {
        let (a, b) = anomaly(kind, &mut rng);
        values.extend([a, b]);
    }
    let features = Array2::from_shape_vec((n, 2), values).expect("2 values per row");
    let labels = std::iter::repeat_n(0u8, n_inliers)
        .chain(std::iter::repeat_n(1u8, n_anomalies))
        .collect();
    let mut ds = Dataset::new(kind.as_str(), features, Some(labels))?;
    ds.anomaly_rate = Some(anomaly_rate);
    Ok(ds)
}

fn inlier(kind: SyntheticKind, rng: &mut StreamRng) -> (f64, f64) {
    match kind {
        SyntheticKind::Dependency => {
            let x1 = rng::standard_normal(rng);
            (x1, x1 + DEPENDENCY_NOISE * rng::standard_normal(rng))
        }
        _ => (rng::standard_normal(rng), rng::standard_normal(rng)),
    }
}

fn anomaly(kind: SyntheticKind, rng: &mut StreamRng) -> (f64, f64) {
    match kind {
        SyntheticKind::Clustered => (
            CLUSTER_OFFSET + rng::standard_normal(rng),
            CLUSTER_OFFSET + rng::standard_normal(rng),
        ),
        SyntheticKind::Global => (
            rng::uniform_range(rng, -GLOBAL_HALF_WIDTH, GLOBAL_HALF_WIDTH),
            rng::uniform_range(rng, -GLOBAL_HALF_WIDTH, GLOBAL_HALF_WIDTH),
        ),
        SyntheticKind::Local => (
            LOCAL_SCALE * rng::standard_normal(rng),
            LOCAL_SCALE * rng::standard_normal(rng),
        ),
        SyntheticKind::Dependency => (rng::standard_normal(rng), rng::standard_normal(rng)),
    }
}
