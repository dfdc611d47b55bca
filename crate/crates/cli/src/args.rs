use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use uadb::booster::{Inference, Strategy};
use uadb::data::SyntheticKind;
use uadb::detectors::DetectorKind;
use uadb::metrics::ThresholdRule;
use uadb::nn::LossKind;

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "uadb", version, about = "Unsupervised anomaly detection with a variance-corrected booster")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled two-dimensional synthetic dataset.
    Synth(SynthArgs),
    /// Fit a detector and write its normalized scores.
    Detect(DetectArgs),
    /// Train a booster on a teacher's scores.
    Boost(BoostArgs),
    /// Compare the teacher, the four ablations and the full booster.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config file, or a JSON report whose `config` is reused.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run seed [default: $UADB_SEED, else 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write a JSON report here.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_parser = parse_synthetic)]
    pub kind: Option<SyntheticKind>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Anomaly rate in (0, 0.5).
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Headered numeric CSV.
    #[arg(long, value_name = "PATH", conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Generate the dataset instead of reading one.
    #[arg(long, value_name = "KIND", value_parser = parse_synthetic)]
    pub synthetic: Option<SyntheticKind>,
    /// Rows of the synthetic dataset.
    #[arg(long)]
    pub n: Option<usize>,
    /// Anomaly rate of the synthetic dataset.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Name of the 0/1 label column [default: label].
    #[arg(long, conflicts_with = "no_labels")]
    pub label_column: Option<String>,
    /// Treat every column as a feature.
    #[arg(long)]
    pub no_labels: bool,
    /// Skip min-max feature scaling.
    #[arg(long, conflicts_with = "scale")]
    pub no_scale: bool,
    /// Min-max scale features (the default).
    #[arg(long)]
    pub scale: bool,
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    #[arg(long, visible_alias = "teacher", value_parser = parse_detector)]
    pub detector: Option<DetectorKind>,
    /// Isolation-forest trees.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Isolation-forest subsample size.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Histogram bins per feature.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Neighbor count for LOF and KNN.
    #[arg(long)]
    pub k: Option<usize>,
    /// Retained PCA components.
    #[arg(long)]
    pub components: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BoosterArgs {
    /// Booster iterations T.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Cross-fitting folds.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    /// Re-initialize the networks every iteration.
    #[arg(long)]
    pub reinit: bool,
    /// Score each row only with the network that held it out.
    #[arg(long)]
    pub held_out: bool,
    /// Correction-rate cut-off on normalized scores instead of the labeled rate.
    #[arg(long, value_name = "CUTOFF")]
    pub fixed_threshold: Option<f64>,
    /// Independent runs with consecutive seeds; metrics are averaged.
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Normalized scores, one per line.
    #[arg(long, value_name = "PATH")]
    pub scores_out: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct BoostArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Use precomputed teacher scores instead of fitting a detector.
    #[arg(long, value_name = "PATH", conflicts_with = "detector")]
    pub teacher_scores: Option<PathBuf>,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    #[command(flatten)]
    pub booster: BoosterArgs,
    /// Final booster scores of the first run, one per line.
    #[arg(long, value_name = "PATH")]
    pub scores_out: Option<PathBuf>,
    /// Pseudo-label history of the first run as CSV.
    #[arg(long, value_name = "PATH")]
    pub labels_out: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long, value_name = "PATH", conflicts_with = "detector")]
    pub teacher_scores: Option<PathBuf>,
    #[command(flatten)]
    pub booster: BoosterArgs,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Scores on a regular grid over the feature box (two-feature data only).
    #[arg(long, value_name = "PATH")]
    pub grid_out: Option<PathBuf>,
    /// Points per axis.
    #[arg(long, default_value_t = 50)]
    pub grid_size: usize,
}

fn parse_synthetic(s: &str) -> Result<SyntheticKind, String> {
    s.parse().map_err(|e: uadb::data::DataError| e.to_string())
}

fn parse_detector(s: &str) -> Result<DetectorKind, String> {
    s.parse().map_err(|e: uadb::detectors::DetectorError| e.to_string())
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: uadb::booster::BoosterError| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "mse" | "squared_error" => Ok(LossKind::SquaredError),
        "ce" | "cross_entropy" => Ok(LossKind::CrossEntropy),
        _ => Err(format!("unknown loss {s:?} (expected mse or ce)")),
    }
}

impl DataArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let d = &mut cfg.data;
        if let Some(p) = &self.data {
            d.path = Some(p.clone());
            d.synthetic = None;
        }
        if let Some(k) = self.synthetic {
            d.synthetic = Some(k);
            d.path = None;
        }
        if let Some(n) = self.n {
            d.n = n;
        }
        if let Some(r) = self.rate {
            d.rate = r;
        }
        if let Some(c) = &self.label_column {
            d.label_column = c.clone();
        }
        if self.no_labels {
            d.label_column.clear();
        }
        if self.no_scale {
            d.scale = false;
        }
        if self.scale {
            d.scale = true;
        }
    }
}

impl DetectorArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let p = &mut cfg.detector;
        if let Some(kind) = self.detector {
            p.kind = kind;
            cfg.teacher_scores = None;
        }
        if let Some(v) = self.trees {
            p.trees = v;
        }
        if let Some(v) = self.subsample {
            p.subsample = v;
        }
        if let Some(v) = self.bins {
            p.bins = v;
        }
        if self.k.is_some() {
            p.k = self.k;
        }
        if self.components.is_some() {
            p.components = self.components;
        }
    }
}

impl BoosterArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let b = &mut cfg.booster;
        if let Some(v) = self.iterations {
            b.iterations = v;
        }
        if let Some(v) = self.folds {
            b.fold_count = v;
        }
        if let Some(v) = self.epochs {
            b.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            b.train.batch_size = v;
        }
        if let Some(v) = self.lr {
            b.train.learning_rate = v;
        }
        if let Some(v) = self.loss {
            b.train.loss = v;
        }
        if self.reinit {
            b.reinit_per_iteration = true;
        }
        if self.held_out {
            b.inference = Inference::HeldOut;
        }
        if let Some(cutoff) = self.fixed_threshold {
            cfg.threshold = Some(ThresholdRule::Fixed { cutoff });
        }
        if let Some(r) = self.repeats {
            cfg.repeats = r;
        }
    }
}
