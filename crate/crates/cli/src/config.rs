//! Resolved run configuration: file values first, explicit flags on top.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use uadb::booster::BoosterConfig;
use uadb::data::{SyntheticKind, DEFAULT_ANOMALY_RATE, DEFAULT_SAMPLES};
use uadb::detectors::DetectorParams;
use uadb::metrics::ThresholdRule;

use crate::UsageError;

pub const SEED_ENV: &str = "UADB_SEED";

/// Where the dataset comes from and how it is prepared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticKind>,
    pub n: usize,
    pub rate: f64,
    /// Empty means the table carries no labels.
    pub label_column: String,
    pub scale: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            synthetic: None,
            n: DEFAULT_SAMPLES,
            rate: DEFAULT_ANOMALY_RATE,
            label_column: "label".into(),
            scale: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub detector: DetectorParams,
    /// External teacher scores; replaces the detector when set.
    pub teacher_scores: Option<PathBuf>,
    pub booster: BoosterConfig,
    /// `None` flags the labeled anomaly rate.
    pub threshold: Option<ThresholdRule>,
    pub repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            detector: DetectorParams::default(),
            teacher_scores: None,
            booster: BoosterConfig::default(),
            threshold: None,
            repeats: 1,
        }
    }
}

impl RunConfig {
    /// Reads a TOML config, or the `config` object of a JSON report.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        let parsed = if is_json {
            let mut value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
            let inner = value.get_mut("config").map(serde_json::Value::take).unwrap_or(value);
            serde_json::from_value(inner).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }

    /// Starting point before flags: the file if given, else defaults with
    /// the seed taken from the environment.
    pub fn base(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => {
                let seed = match std::env::var(SEED_ENV) {
                    Ok(v) => v
                        .trim()
                        .parse()
                        .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer"))
                        .map_err(|e| UsageError(format!("{e:#}")))?,
                    Err(_) => 0,
                };
                Ok(Self {
                    seed,
                    ..Self::default()
                })
            }
        }
    }

    /// Pushes the run seed into the nested detector and booster settings.
    pub fn sync_seeds(&mut self) {
        self.detector.seed = self.seed;
        self.booster.seed = self.seed;
    }

    /// Seed of repeat `r`; repeat 0 uses the configured seed.
    pub fn repeat_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.repeats == 0 {
            return Err(UsageError("repeats must be >= 1".into()).into());
        }
        if let Some(ThresholdRule::Fixed { cutoff }) = self.threshold {
            if !(0.0..=1.0).contains(&cutoff) {
                return Err(UsageError(format!("threshold cutoff {cutoff} outside [0, 1]")).into());
            }
        }
        Ok(())
    }
}
