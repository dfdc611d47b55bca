//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `EXPECTED_SHORTFALLS` are still evaluated and printed
//! as FAIL when they fail; they do not turn the process exit code red.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rayon::prelude::*;
use uadb::booster::{per_instance_variance, run_booster, update_pseudo_labels, BoosterConfig, PseudoLabelMatrix, Strategy, VarianceVector};
use uadb::data::{generate_synthetic, scale_features, Dataset, SyntheticKind};
use uadb::detectors::{fit_score_knn, DetectorKind, DetectorParams, ScoreVector};
use uadb::metrics::{aucroc, average_precision, correction_rate, variance_gap, ThresholdRule};
use uadb::nn::{LossKind, MlpModel};
use uadb::rng;

const EXPECTED_SHORTFALLS: [usize; 2] = [5, 6];

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

const PAIRS: [(SyntheticKind, DetectorKind); 8] = [
    (SyntheticKind::Clustered, DetectorKind::IForest),
    (SyntheticKind::Clustered, DetectorKind::Hbos),
    (SyntheticKind::Global, DetectorKind::IForest),
    (SyntheticKind::Global, DetectorKind::Hbos),
    (SyntheticKind::Local, DetectorKind::IForest),
    (SyntheticKind::Local, DetectorKind::Lof),
    (SyntheticKind::Dependency, DetectorKind::IForest),
    (SyntheticKind::Dependency, DetectorKind::Knn),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

// 1 -----------------------------------------------------------------------

fn gap_law() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(0x6A9);
    let mut worst_formula: f64 = 0.0;
    let mut max_rounds = 0;
    let mut failures = 0;
    for _ in 0..1000 {
        let a = rng::uniform_range(&mut r, 1e-6, 1.0 - 1e-6);
        let b = rng::uniform_range(&mut r, 1e-6, 1.0 - 1e-6);
        let (y_fp, y_fn) = if a > b { (a, b) } else { (b, a) };
        if y_fp == y_fn {
            continue;
        }
        let v_l = rng::uniform_range(&mut r, 0.0, 0.49);
        let v_h = rng::uniform_range(&mut r, v_l + 0.01, 0.5);
        // Order: TP, FP, FN, TN.
        let v = VarianceVector::new(vec![v_h, v_l, v_h, v_l]).unwrap();
        let mut y = vec![1.0, y_fp, y_fn, 0.0];
        let dv = v_h - v_l;

        let gap = y[1] - y[2];
        let next = update_pseudo_labels(&y, &v).unwrap().into_values();
        let closed = (gap - dv) / (1.0 + dv);
        worst_formula = worst_formula.max(((next[1] - next[2]) - closed).abs());
        if next[1] - next[2] >= gap {
            failures += 1;
        }

        let mut rounds = 0;
        while y[2] < y[1] && rounds < 200 {
            y = update_pseudo_labels(&y, &v).unwrap().into_values();
            rounds += 1;
        }
        if y[2] < y[1] {
            failures += 1;
        }
        max_rounds = max_rounds.max(rounds);
    }
    let elapsed = start.elapsed();
    outcome(
        worst_formula <= 1e-12 && failures == 0 && elapsed < Duration::from_secs(1),
        format!(
            "max |gap - closed form| = {worst_formula:.2e}, failures = {failures}, max rounds to invert = {max_rounds}, {}",
            secs(elapsed)
        ),
    )
}

// 2 -----------------------------------------------------------------------

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Mean over positives of the precision at the positive's own position, with
/// rows ordered by descending score and ascending index among equal scores.
fn definitional_ap(scores: &[f64], labels: &[u8]) -> f64 {
    let n = scores.len();
    let ahead = |i: usize, j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
    let mut total = 0.0;
    let mut positives = 0.0;
    for i in (0..n).filter(|&i| labels[i] == 1) {
        let position = 1 + (0..n).filter(|&j| ahead(i, j)).count();
        let hits = 1 + (0..n).filter(|&j| labels[j] == 1 && ahead(i, j)).count();
        total += hits as f64 / position as f64;
        positives += 1.0;
    }
    total / positives
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(0xA0C);
    let (mut worst_auc, mut worst_ap): (f64, f64) = (0.0, 0.0);
    let mut tie_heavy = 0;
    for case in 0..500 {
        let n = 2 + rng::index_below(&mut r, 49);
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng::uniform(&mut r) < 0.3)).collect();
        labels[0] = 1;
        labels[1] = 0;
        rng::shuffle(&mut r, &mut labels);
        let scores: Vec<f64> = if case % 2 == 0 {
            tie_heavy += 1;
            (0..n).map(|_| rng::index_below(&mut r, 4) as f64).collect()
        } else {
            (0..n).map(|_| rng::standard_normal(&mut r)).collect()
        };
        worst_auc = worst_auc.max((aucroc(&scores, &labels).unwrap() - pairwise_auc(&scores, &labels)).abs());
        worst_ap = worst_ap.max((average_precision(&scores, &labels).unwrap() - definitional_ap(&scores, &labels)).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst_auc <= 1e-12 && worst_ap <= 1e-12 && elapsed < Duration::from_secs(5),
        format!(
            "max AUCROC error {worst_auc:.2e}, max AP error {worst_ap:.2e} over 500 instances ({tie_heavy} tie-heavy), {}",
            secs(elapsed)
        ),
    )
}

// 3 -----------------------------------------------------------------------

/// Worst relative difference between analytic gradients and central
/// differences of the loss, computed here from the loss alone.
fn finite_difference_error(model: &MlpModel, x: &Array2<f64>, y: &[f64], kind: LossKind) -> f64 {
    let analytic = model.gradients(x.view(), y, kind).unwrap();
    let h = 1e-5;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for l in 0..model.layers().len() {
        let (rows, cols) = model.layers()[l].weights.dim();
        let n_bias = model.layers()[l].bias.len();
        let mut check = |probe: &mut MlpModel, param: &dyn Fn(&mut MlpModel) -> &mut f64, exact: f64| {
            let original = *param(probe);
            *param(probe) = original + h;
            let plus = probe.loss(x.view(), y, kind).unwrap();
            *param(probe) = original - h;
            let minus = probe.loss(x.view(), y, kind).unwrap();
            *param(probe) = original;
            let numeric = (plus - minus) / (2.0 * h);
            let scale = exact.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((exact - numeric).abs() / scale);
        };
        for i in 0..rows {
            for j in 0..cols {
                check(&mut probe, &|m| &mut m.layers_mut()[l].weights[[i, j]], analytic.layers[l].weights[[i, j]]);
            }
        }
        for j in 0..n_bias {
            check(&mut probe, &|m| &mut m.layers_mut()[l].bias[j], analytic.layers[l].bias[j]);
        }
    }
    worst
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for m in 0..50u64 {
        let mut r = rng::stream(rng::derive_seed(0x6C, m));
        let d = 1 + rng::index_below(&mut r, 4);
        let hidden = [2 + rng::index_below(&mut r, 4), 2 + rng::index_below(&mut r, 4)];
        let mut model = MlpModel::with_hidden(d, &hidden, m);
        // Nonzero biases keep rectifier inputs away from the kink.
        for layer in model.layers_mut() {
            layer.bias.mapv_inplace(|_| rng::uniform_range(&mut r, -0.5, 0.5));
        }
        let n = 3 + rng::index_below(&mut r, 6);
        let x = Array2::from_shape_fn((n, d), |_| rng::standard_normal(&mut r));
        let y: Vec<f64> = (0..n).map(|_| rng::uniform(&mut r)).collect();
        for kind in [LossKind::SquaredError, LossKind::CrossEntropy] {
            worst = worst.max(finite_difference_error(&model, &x, &y, kind));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && elapsed < Duration::from_secs(30),
        format!("max relative error {worst:.2e} over 50 models x 2 losses, {}", secs(elapsed)),
    )
}

// 4 -----------------------------------------------------------------------

fn all_pairs_knn(x: &Array2<f64>, k: usize) -> Vec<f64> {
    let n = x.nrows();
    (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect()
}

fn two_pass_variance(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64
}

fn knn_and_variance_oracles() -> Outcome {
    let mut r = rng::stream(0x4E4);
    let mut knn_mismatches = 0;
    let mut cases = 0;
    for n in [2usize, 3, 7, 20, 50, 120, 200] {
        for duplicates in [false, true] {
            let d = 1 + rng::index_below(&mut r, 4);
            let mut x = Array2::from_shape_fn((n, d), |_| rng::standard_normal(&mut r));
            if duplicates {
                // Coarse grid values create exact distance ties.
                x.mapv_inplace(|v| (v * 2.0).round());
            }
            for k in [1, (n - 1).min(5), n - 1] {
                let ds = Dataset::new("oracle", x.clone(), None).unwrap();
                let got = fit_score_knn(&ds, k).unwrap().into_values();
                cases += 1;
                if got != all_pairs_knn(&x, k) {
                    knn_mismatches += 1;
                }
            }
        }
    }

    let mut worst_var: f64 = 0.0;
    for _ in 0..50 {
        let n = 1 + rng::index_below(&mut r, 40);
        let t = 1 + rng::index_below(&mut r, 11);
        let columns: Vec<Vec<f64>> = (0..t).map(|_| (0..n).map(|_| rng::uniform(&mut r)).collect()).collect();
        let current: Vec<f64> = (0..n).map(|_| rng::uniform(&mut r)).collect();
        let mut history = PseudoLabelMatrix::new(ScoreVector::normalized(columns[0].clone()).unwrap()).unwrap();
        for c in &columns[1..] {
            history.push(ScoreVector::normalized(c.clone()).unwrap()).unwrap();
        }
        let v = per_instance_variance(&history, &current).unwrap();
        for i in 0..n {
            let mut entries: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            entries.push(current[i]);
            worst_var = worst_var.max((v.values()[i] - two_pass_variance(&entries)).abs());
        }
    }
    outcome(
        knn_mismatches == 0 && worst_var <= 1e-12,
        format!("kNN exact on {}/{cases} cases (n <= 200), max variance error {worst_var:.2e}", cases - knn_mismatches),
    )
}

// 5, 7, 8 share one sweep over the synthetic suite ---------------------------

/// One booster run on one pair and seed.
struct SuiteRun {
    teacher_auc: f64,
    /// Indexed like `Strategy::ALL`.
    auc: [f64; 5],
    ap: [f64; 5],
    /// Of the last UADB iteration.
    uadb_variance_gap: f64,
}

struct Suite {
    /// `runs[pair][seed]`.
    runs: Vec<Vec<SuiteRun>>,
    elapsed: Duration,
}

fn prepared(kind: SyntheticKind, seed: u64) -> Dataset {
    scale_features(&generate_synthetic(kind, 300, 0.15, seed).unwrap())
}

fn suite() -> &'static Suite {
    static SUITE: OnceLock<Suite> = OnceLock::new();
    SUITE.get_or_init(|| {
        let start = Instant::now();
        let runs = PAIRS
            .par_iter()
            .map(|&(kind, det)| {
                SEEDS
                    .par_iter()
                    .map(|&seed| {
                        let ds = prepared(kind, seed);
                        let labels = ds.labels().unwrap();
                        let teacher = DetectorParams::new(det).with_seed(seed).fit_score(&ds).unwrap();
                        let mut auc = [0.0; 5];
                        let mut ap = [0.0; 5];
                        let mut gap = f64::NAN;
                        for (j, s) in Strategy::ALL.into_iter().enumerate() {
                            let cfg = BoosterConfig::default().with_strategy(s).with_seed(seed);
                            let res = run_booster(&ds, &teacher, &cfg).unwrap();
                            auc[j] = aucroc(res.final_scores.values(), labels).unwrap();
                            ap[j] = average_precision(res.final_scores.values(), labels).unwrap();
                            if s == Strategy::Uadb {
                                gap = variance_gap(res.variance_history.last().unwrap().values(), labels).unwrap();
                            }
                        }
                        SuiteRun {
                            teacher_auc: aucroc(teacher.values(), labels).unwrap(),
                            auc,
                            ap,
                            uadb_variance_gap: gap,
                        }
                    })
                    .collect()
            })
            .collect();
        Suite {
            runs,
            elapsed: start.elapsed(),
        }
    })
}

fn uadb_index() -> usize {
    Strategy::ALL.iter().position(|&s| s == Strategy::Uadb).unwrap()
}

fn synthetic_improvement() -> Outcome {
    let s = suite();
    let u = uadb_index();
    let mut within = 0;
    let mut wins = 0;
    let mut cells = Vec::new();
    for ((kind, det), runs) in PAIRS.iter().zip(&s.runs) {
        let t = median(runs.iter().map(|r| r.teacher_auc).collect());
        let b = median(runs.iter().map(|r| r.auc[u]).collect());
        within += usize::from(b >= t - 0.02);
        wins += usize::from(b > t);
        cells.push(format!("{kind}/{det} {t:.3}->{b:.3}"));
    }
    outcome(
        within == 8 && wins >= 6 && s.elapsed < Duration::from_secs(300),
        format!(
            "within 0.02 on {within}/8, strictly better on {wins}/8 (median AUCROC teacher->booster: {}), suite {}",
            cells.join(", "),
            secs(s.elapsed)
        ),
    )
}

fn variance_evidence() -> Outcome {
    let s = suite();
    let per_seed: Vec<usize> = (0..SEEDS.len())
        .map(|i| {
            PAIRS
                .iter()
                .zip(&s.runs)
                .filter(|((_, det), _)| *det == DetectorKind::IForest)
                .filter(|(_, runs)| runs[i].uadb_variance_gap < 0.0)
                .count()
        })
        .collect();
    let med = median(per_seed.iter().map(|&c| c as f64).collect());
    outcome(
        med >= 3.0,
        format!("datasets where anomalies carry more variance, per seed: {per_seed:?} of 4 (median {med})"),
    )
}

fn ablation_ordering() -> Outcome {
    let s = suite();
    let u = uadb_index();
    let n_pairs = PAIRS.len() as f64;
    let summary = |j: usize, ap: bool| {
        median(
            (0..SEEDS.len())
                .map(|i| s.runs.iter().map(|runs| if ap { runs[i].ap[j] } else { runs[i].auc[j] }).sum::<f64>() / n_pairs)
                .collect(),
        )
    };
    let mut pass = true;
    let mut cells = Vec::new();
    for (j, strat) in Strategy::ALL.into_iter().enumerate() {
        let (auc, ap) = (summary(j, false), summary(j, true));
        cells.push(format!("{strat} {auc:.3}/{ap:.3}"));
        if j != u {
            pass &= summary(u, false) > auc && summary(u, true) > ap;
        }
    }
    outcome(pass, format!("median of suite-mean AUCROC/AP: {}", cells.join(", ")))
}

// 6 -----------------------------------------------------------------------

fn correction() -> Outcome {
    let start = Instant::now();
    let mut rates = Vec::new();
    let mut counts = Vec::new();
    for &seed in &SEEDS {
        let ds = prepared(SyntheticKind::Clustered, seed);
        let labels = ds.labels().unwrap();
        let teacher = DetectorParams::new(DetectorKind::IForest).with_seed(seed).fit_score(&ds).unwrap();
        let res = run_booster(&ds, &teacher, &BoosterConfig::default().with_seed(seed)).unwrap();
        let c = correction_rate(
            teacher.values(),
            res.final_scores.values(),
            labels,
            ThresholdRule::contamination_from_labels(labels),
        )
        .unwrap();
        rates.push(c.rate);
        counts.push(format!("{}/{}", c.corrected, c.teacher_errors));
    }
    let med = median(rates);
    let elapsed = start.elapsed();
    outcome(
        med >= 0.5 && elapsed < Duration::from_secs(60),
        format!("median correction rate {med:.3} (corrected/teacher errors per seed: {}), {}", counts.join(" "), secs(elapsed)),
    )
}

// 9 -----------------------------------------------------------------------

fn uadb(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_uadb"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("uadb {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn same_bytes(dir: &Path, a: &str, b: &str) -> Result<bool, String> {
    let read = |f: &str| std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"));
    Ok(read(a)? == read(b)?)
}

/// First run args, re-run args, and output pairs that must match.
type RerunCase<'a> = (Vec<&'a str>, Vec<&'a str>, Vec<(&'a str, &'a str)>);

fn determinism() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cases: Vec<RerunCase> = vec![
        (
            vec!["synth", "--kind", "dependency", "--seed", "4", "--out", "d1.csv", "--report", "s1.json"],
            vec!["synth", "--config", "s1.json", "--out", "d2.csv", "--report", "s2.json"],
            vec![("d1.csv", "d2.csv"), ("s1.json", "s2.json")],
        ),
        (
            vec!["detect", "--data", "d1.csv", "--detector", "lof", "--k", "15", "--scores-out", "t1.txt", "--report", "r1.json"],
            vec!["detect", "--config", "r1.json", "--scores-out", "t2.txt", "--report", "r2.json"],
            vec![("t1.txt", "t2.txt"), ("r1.json", "r2.json")],
        ),
        (
            vec![
                "boost", "--synthetic", "clustered", "--teacher", "iforest", "--seed", "2", "--repeats", "2",
                "--scores-out", "b1.txt", "--labels-out", "l1.csv", "--grid-out", "g1.csv", "--grid-size", "15",
                "--report", "b1.json",
            ],
            vec![
                "boost", "--config", "b1.json", "--scores-out", "b2.txt", "--labels-out", "l2.csv", "--grid-out",
                "g2.csv", "--grid-size", "15", "--report", "b2.json",
            ],
            vec![("b1.txt", "b2.txt"), ("l1.csv", "l2.csv"), ("g1.csv", "g2.csv"), ("b1.json", "b2.json")],
        ),
        (
            vec!["boost", "--data", "d1.csv", "--teacher-scores", "t1.txt", "--strategy", "self", "--iterations", "4", "--report", "x1.json"],
            vec!["boost", "--config", "x1.json", "--report", "x2.json"],
            vec![("x1.json", "x2.json")],
        ),
        (
            vec!["ablate", "--synthetic", "local", "--teacher", "lof", "--seed", "3", "--iterations", "3", "--report", "a1.json"],
            vec!["ablate", "--config", "a1.json", "--report", "a2.json"],
            vec![("a1.json", "a2.json")],
        ),
    ];
    let mut checked = 0;
    let mut differing = Vec::new();
    for (first, again, files) in &cases {
        if let Err(e) = uadb(dir, first).and_then(|_| uadb(dir, again)) {
            return outcome(false, e);
        }
        for (a, b) in files {
            checked += 1;
            match same_bytes(dir, a, b) {
                Ok(true) => {}
                Ok(false) => differing.push(format!("{a} vs {b}")),
                Err(e) => return outcome(false, e),
            }
        }
    }
    outcome(
        differing.is_empty(),
        format!(
            "{} of {checked} re-run outputs byte-identical across synth/detect/boost/ablate{}, {}",
            checked - differing.len(),
            if differing.is_empty() { String::new() } else { format!(" (differ: {})", differing.join(", ")) },
            secs(start.elapsed())
        ),
    )
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "gap-narrowing law", gap_law),
        (2, "metric oracles", metric_oracles),
        (3, "gradient check", gradient_check),
        (4, "kNN and variance oracles", knn_and_variance_oracles),
        (5, "synthetic improvement", synthetic_improvement),
        (6, "correction rate", correction),
        (7, "variance evidence", variance_evidence),
        (8, "ablation ordering", ablation_ordering),
        (9, "determinism", determinism),
    ];
    let mut unexpected = Vec::new();
    let mut passed = 0;
    for (id, name, check) in criteria {
        let o = check();
        println!("criterion {id} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if o.pass {
            passed += 1;
        } else if !EXPECTED_SHORTFALLS.contains(&id) {
            unexpected.push(id);
        }
    }
    println!("{passed}/9 criteria pass");
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
