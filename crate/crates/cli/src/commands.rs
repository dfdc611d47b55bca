use std::path::Path;

use anyhow::{Context, Result};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use uadb::booster::{run_booster, BoosterResult, IterationMetrics, Strategy};
use uadb::data::{generate_synthetic, load_csv, scale_features, write_csv, DataError, Dataset};
use uadb::detectors::{import_scores, minmax_scale, write_scores, FittedDetector, ScoreVector};
use uadb::metrics::{correction_rate, variance_gap, EvalReport, ThresholdRule};

use crate::args::{AblateArgs, BoostArgs, Command, CommonArgs, DetectArgs, GridArgs, SynthArgs};
use crate::config::RunConfig;
use crate::table::{metric, optional, render};
use crate::UsageError;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Detect(a) => detect(a),
        Command::Boost(a) => boost(a),
        Command::Ablate(a) => ablate(a),
    }
}

fn resolve(common: &CommonArgs, apply: impl FnOnce(&mut RunConfig)) -> Result<RunConfig> {
    let mut cfg = RunConfig::base(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    apply(&mut cfg);
    cfg.sync_seeds();
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct DatasetSummary {
    name: String,
    n: usize,
    d: usize,
    anomalies: Option<usize>,
}

impl DatasetSummary {
    fn of(ds: &Dataset) -> Self {
        Self {
            name: ds.name.clone(),
            n: ds.n_samples(),
            d: ds.n_features(),
            anomalies: ds.labels().map(|l| l.iter().filter(|&&v| v == 1).count()),
        }
    }
}

fn synthetic_error(e: DataError) -> anyhow::Error {
    match e {
        DataError::InvalidSynthetic(msg) => UsageError(msg).into(),
        other => other.into(),
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let d = &cfg.data;
    let ds = match (&d.path, d.synthetic) {
        (Some(path), _) => {
            let label = (!d.label_column.is_empty()).then_some(d.label_column.as_str());
            load_csv(path, label).with_context(|| format!("loading {}", path.display()))?
        }
        (None, Some(kind)) => generate_synthetic(kind, d.n, d.rate, cfg.seed).map_err(synthetic_error)?,
        (None, None) => return Err(UsageError("a dataset is required: pass --data or --synthetic".into()).into()),
    };
    Ok(if d.scale { scale_features(&ds) } else { ds })
}

fn write_report(path: Option<&Path>, report: &impl Serialize) -> Result<()> {
    if let Some(path) = path {
        let mut text = serde_json::to_string_pretty(report)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing report {}", path.display()))?;
    }
    Ok(())
}

fn write_score_file(path: Option<&Path>, scores: &[f64]) -> Result<()> {
    if let Some(path) = path {
        write_scores(scores, path).with_context(|| format!("writing scores {}", path.display()))?;
    }
    Ok(())
}

/// Regular grid over the bounding box of a two-feature dataset.
fn grid_points(ds: &Dataset, size: usize) -> Result<Array2<f64>> {
    if ds.n_features() != 2 {
        return Err(UsageError(format!("grid export needs 2 features, dataset has {}", ds.n_features())).into());
    }
    if size < 2 {
        return Err(UsageError("grid size must be >= 2".into()).into());
    }
    let bounds: Vec<(f64, f64)> = ds
        .features
        .columns()
        .into_iter()
        .map(|c| c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))))
        .collect();
    let step = |(lo, hi): (f64, f64), i: usize| lo + (hi - lo) * i as f64 / (size - 1) as f64;
    Ok(Array2::from_shape_fn((size * size, 2), |(r, j)| {
        let i = if j == 0 { r % size } else { r / size };
        step(bounds[j], i)
    }))
}

fn write_grid(path: &Path, grid: &Array2<f64>, columns: &[(&str, Vec<f64>)]) -> Result<()> {
    let mut text = String::from("x1,x2");
    for (name, _) in columns {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for (r, row) in grid.rows().into_iter().enumerate() {
        text.push_str(&format!("{},{}", row[0], row[1]));
        for (_, values) in columns {
            text.push_str(&format!(",{}", values[r]));
        }
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing grid {}", path.display()))
}

fn synth(args: SynthArgs) -> Result<()> {
    let cfg = resolve(&args.common, |cfg| {
        if let Some(k) = args.kind {
            cfg.data.synthetic = Some(k);
            cfg.data.path = None;
        }
        if let Some(n) = args.n {
            cfg.data.n = n;
        }
        if let Some(r) = args.rate {
            cfg.data.rate = r;
        }
    })?;
    let kind = cfg
        .data
        .synthetic
        .ok_or_else(|| UsageError("--kind is required".into()))?;
    let ds = generate_synthetic(kind, cfg.data.n, cfg.data.rate, cfg.seed).map_err(synthetic_error)?;
    write_csv(&ds, &args.out)?;
    let summary = DatasetSummary::of(&ds);
    println!(
        "{}: {} rows, {} features, {} anomalies",
        args.out.display(),
        summary.n,
        summary.d,
        summary.anomalies.unwrap_or(0)
    );
    #[derive(Serialize)]
    struct Report<'a> {
        command: &'static str,
        config: &'a RunConfig,
        dataset: DatasetSummary,
    }
    write_report(
        args.common.report.as_deref(),
        &Report {
            command: "synth",
            config: &cfg,
            dataset: summary,
        },
    )
}

fn fit_detector(cfg: &RunConfig, ds: &Dataset, seed: u64) -> Result<FittedDetector> {
    let mut params = cfg.detector.clone();
    params.seed = seed;
    params
        .fit(ds)
        .with_context(|| format!("fitting {} on {} ({} rows)", params.kind, ds.name, ds.n_samples()))
}

fn detect(args: DetectArgs) -> Result<()> {
    let cfg = resolve(&args.common, |cfg| {
        args.data.apply(cfg);
        args.detector.apply(cfg);
    })?;
    let ds = load_dataset(&cfg)?;
    let fitted = fit_detector(&cfg, &ds, cfg.seed)?;
    let scores = minmax_scale(&fitted.training_scores);
    write_score_file(args.scores_out.as_deref(), scores.values())?;
    export_detector_grid(&args.grid, &ds, &fitted)?;

    let eval = ds
        .labels()
        .map(|l| EvalReport::evaluate(scores.values(), l))
        .transpose()?;
    let summary = DatasetSummary::of(&ds);
    println!("{} on {} ({} rows, {} features)", cfg.detector.kind, summary.name, summary.n, summary.d);
    if let Some(e) = &eval {
        print!(
            "{}",
            render(&["detector", "aucroc", "ap"], &[vec![cfg.detector.kind.to_string(), metric(e.aucroc), metric(e.ap)]])
        );
    }
    #[derive(Serialize)]
    struct Report<'a> {
        command: &'static str,
        config: &'a RunConfig,
        dataset: DatasetSummary,
        eval: Option<EvalReport>,
    }
    write_report(
        args.common.report.as_deref(),
        &Report {
            command: "detect",
            config: &cfg,
            dataset: summary,
            eval,
        },
    )
}

fn export_detector_grid(grid: &GridArgs, ds: &Dataset, fitted: &FittedDetector) -> Result<()> {
    if let Some(path) = &grid.grid_out {
        let points = grid_points(ds, grid.grid_size)?;
        let scores = fitted.model.score(points.view())?;
        write_grid(path, &points, &[("score", scores)])?;
    }
    Ok(())
}

/// Teacher scores for one run, plus the fitted detector when one was used.
fn teacher_for(cfg: &RunConfig, ds: &Dataset, seed: u64) -> Result<(ScoreVector, Option<FittedDetector>)> {
    match &cfg.teacher_scores {
        Some(path) => {
            let scores = import_scores(path, ds.n_samples())
                .with_context(|| format!("teacher scores for {} ({} rows)", ds.name, ds.n_samples()))?;
            Ok((scores, None))
        }
        None => {
            let fitted = fit_detector(cfg, ds, seed)?;
            Ok((fitted.training_scores.clone(), Some(fitted)))
        }
    }
}

fn check_booster(cfg: &RunConfig, ds: &Dataset) -> Result<()> {
    cfg.booster
        .validate(ds.n_samples())
        .map_err(|e| UsageError(e.to_string()).into())
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary {
    seed: u64,
    teacher: Option<EvalReport>,
    booster: Option<EvalReport>,
    iterations: Option<Vec<IterationMetrics>>,
}

struct BoostRun {
    summary: RunSummary,
    result: BoosterResult,
    detector: Option<FittedDetector>,
}

fn boost_once(cfg: &RunConfig, ds: &Dataset, seed: u64) -> Result<BoostRun> {
    let (teacher, detector) = teacher_for(cfg, ds, seed)?;
    let mut booster_cfg = cfg.booster.clone();
    booster_cfg.seed = seed;
    let result = run_booster(ds, &teacher, &booster_cfg)?;
    let (teacher_eval, booster_eval) = match ds.labels() {
        Some(labels) => {
            let t = minmax_scale(&teacher);
            let teacher_eval = EvalReport::evaluate(t.values(), labels)?;
            let mut b = EvalReport::evaluate(result.final_scores.values(), labels)?;
            let rule = cfg
                .threshold
                .unwrap_or_else(|| ThresholdRule::contamination_from_labels(labels));
            b.correction_rate = Some(correction_rate(t.values(), result.final_scores.values(), labels, rule)?.rate);
            b.variance_gap = result
                .variance_history
                .last()
                .and_then(|v| variance_gap(v.values(), labels).ok());
            (Some(teacher_eval), Some(b))
        }
        None => (None, None),
    };
    Ok(BoostRun {
        summary: RunSummary {
            seed,
            teacher: teacher_eval,
            booster: booster_eval,
            iterations: result.iteration_metrics.clone(),
        },
        result,
        detector,
    })
}

#[derive(Debug, Serialize)]
struct MeanSummary {
    teacher_aucroc: f64,
    teacher_ap: f64,
    booster_aucroc: f64,
    booster_ap: f64,
    correction_rate: Option<f64>,
    variance_gap: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    sum / count.max(1) as f64
}

fn mean_summary(runs: &[RunSummary]) -> Option<MeanSummary> {
    let pairs: Vec<(&EvalReport, &EvalReport)> = runs
        .iter()
        .filter_map(|r| Some((r.teacher.as_ref()?, r.booster.as_ref()?)))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let optional_mean = |f: fn(&EvalReport) -> Option<f64>| {
        let vals: Vec<f64> = pairs.iter().filter_map(|(_, b)| f(b)).collect();
        (!vals.is_empty()).then(|| mean(vals.into_iter()))
    };
    Some(MeanSummary {
        teacher_aucroc: mean(pairs.iter().map(|(t, _)| t.aucroc)),
        teacher_ap: mean(pairs.iter().map(|(t, _)| t.ap)),
        booster_aucroc: mean(pairs.iter().map(|(_, b)| b.aucroc)),
        booster_ap: mean(pairs.iter().map(|(_, b)| b.ap)),
        correction_rate: optional_mean(|b| b.correction_rate),
        variance_gap: optional_mean(|b| b.variance_gap),
    })
}

fn boost(args: BoostArgs) -> Result<()> {
    let cfg = resolve(&args.common, |cfg| {
        args.data.apply(cfg);
        args.detector.apply(cfg);
        if let Some(p) = &args.teacher_scores {
            cfg.teacher_scores = Some(p.clone());
        }
        if let Some(s) = args.strategy {
            cfg.booster.strategy = s;
        }
        args.booster.apply(cfg);
    })?;
    let ds = load_dataset(&cfg)?;
    check_booster(&cfg, &ds)?;

    let runs: Vec<BoostRun> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| boost_once(&cfg, &ds, cfg.repeat_seed(r)))
        .collect::<Result<_>>()?;
    let first = &runs[0];
    write_score_file(args.scores_out.as_deref(), first.result.final_scores.values())?;
    if let Some(path) = &args.labels_out {
        first
            .result
            .label_history
            .write_csv(path)
            .with_context(|| format!("writing label history {}", path.display()))?;
    }
    if let Some(path) = &args.grid.grid_out {
        let points = grid_points(&ds, args.grid.grid_size)?;
        let mut columns = Vec::new();
        if let Some(det) = &first.detector {
            columns.push(("teacher", det.model.score(points.view())?));
        }
        let ensemble = first.result.ensemble.as_ref().expect("fresh results carry their networks");
        columns.push(("network", ensemble.predict_averaged(points.view())?));
        write_grid(path, &points, &columns)?;
    }

    let summaries: Vec<RunSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    let mean = mean_summary(&summaries);
    let summary = DatasetSummary::of(&ds);
    let teacher_name = match &cfg.teacher_scores {
        Some(p) => p.display().to_string(),
        None => cfg.detector.kind.to_string(),
    };
    println!(
        "{} booster, teacher {} on {} ({} rows), {} run(s)",
        cfg.booster.strategy, teacher_name, summary.name, summary.n, cfg.repeats
    );
    if let Some(m) = &mean {
        print!(
            "{}",
            render(
                &["model", "aucroc", "ap", "correction", "variance_gap"],
                &[
                    vec!["teacher".into(), metric(m.teacher_aucroc), metric(m.teacher_ap), "-".into(), "-".into()],
                    vec![
                        "booster".into(),
                        metric(m.booster_aucroc),
                        metric(m.booster_ap),
                        optional(m.correction_rate),
                        optional(m.variance_gap),
                    ],
                ],
            )
        );
    }
    if let Some(iters) = &first.summary.iterations {
        println!();
        let rows: Vec<Vec<String>> = iters
            .iter()
            .map(|m| {
                vec![
                    m.iteration.to_string(),
                    metric(m.aucroc),
                    metric(m.ap),
                    metric(m.label_aucroc),
                    optional(m.variance_gap),
                ]
            })
            .collect();
        print!("{}", render(&["iteration", "aucroc", "ap", "label_aucroc", "variance_gap"], &rows));
    }

    #[derive(Serialize)]
    struct Report<'a> {
        command: &'static str,
        config: &'a RunConfig,
        dataset: DatasetSummary,
        label_history_columns: usize,
        mean: Option<MeanSummary>,
        runs: Vec<RunSummary>,
        final_scores: &'a [f64],
    }
    write_report(
        args.common.report.as_deref(),
        &Report {
            command: "boost",
            config: &cfg,
            dataset: summary,
            label_history_columns: first.result.label_history.n_columns(),
            mean,
            runs: summaries,
            final_scores: first.result.final_scores.values(),
        },
    )
}

/// Row labels of the ablation table, in print order.
pub const VARIANTS: [&str; 6] = ["Origin", "Naive", "Discrepancy", "Self", "Discrepancy*", "UADB"];

const ABLATION_STRATEGIES: [Strategy; 5] = [
    Strategy::Naive,
    Strategy::Discrepancy,
    Strategy::SelfTraining,
    Strategy::DiscrepancyStar,
    Strategy::Uadb,
];

#[derive(Debug, Serialize)]
struct AblationRow {
    variant: &'static str,
    aucroc: f64,
    ap: f64,
}

fn ablate(args: AblateArgs) -> Result<()> {
    let cfg = resolve(&args.common, |cfg| {
        args.data.apply(cfg);
        args.detector.apply(cfg);
        if let Some(p) = &args.teacher_scores {
            cfg.teacher_scores = Some(p.clone());
        }
        args.booster.apply(cfg);
    })?;
    let ds = load_dataset(&cfg)?;
    check_booster(&cfg, &ds)?;
    let labels = ds
        .labels()
        .ok_or_else(|| anyhow::anyhow!("ablation needs labeled data ({} has no label column)", ds.name))?;

    // Per repeat: one (aucroc, ap) per variant, in VARIANTS order.
    let per_run: Vec<Vec<(f64, f64)>> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| -> Result<Vec<(f64, f64)>> {
            let seed = cfg.repeat_seed(r);
            let (teacher, _) = teacher_for(&cfg, &ds, seed)?;
            let origin = EvalReport::evaluate(minmax_scale(&teacher).values(), labels)?;
            let boosted: Vec<(f64, f64)> = ABLATION_STRATEGIES
                .par_iter()
                .map(|&s| -> Result<(f64, f64)> {
                    let mut bc = cfg.booster.clone().with_strategy(s);
                    bc.seed = seed;
                    let result = run_booster(&ds, &teacher, &bc)?;
                    let e = EvalReport::evaluate(result.final_scores.values(), labels)?;
                    Ok((e.aucroc, e.ap))
                })
                .collect::<Result<_>>()?;
            Ok(std::iter::once((origin.aucroc, origin.ap)).chain(boosted).collect())
        })
        .collect::<Result<_>>()?;

    let rows: Vec<AblationRow> = VARIANTS
        .iter()
        .enumerate()
        .map(|(j, &variant)| AblationRow {
            variant,
            aucroc: mean(per_run.iter().map(|r| r[j].0)),
            ap: mean(per_run.iter().map(|r| r[j].1)),
        })
        .collect();
    let summary = DatasetSummary::of(&ds);
    println!("ablation on {} ({} rows), {} run(s)", summary.name, summary.n, cfg.repeats);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.variant.to_owned(), metric(r.aucroc), metric(r.ap)])
        .collect();
    print!("{}", render(&["variant", "aucroc", "ap"], &table));

    #[derive(Serialize)]
    struct Report<'a> {
        command: &'static str,
        config: &'a RunConfig,
        dataset: DatasetSummary,
        rows: Vec<AblationRow>,
    }
    write_report(
        args.common.report.as_deref(),
        &Report {
            command: "ablate",
            config: &cfg,
            dataset: summary,
            rows,
        },
    )
}
