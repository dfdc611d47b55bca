use uadb::booster::{correction_trace, run_booster, BoosterConfig, Strategy};
use uadb::data::{generate_synthetic, scale_features, Dataset, SyntheticKind};
use uadb::detectors::{fit_score_hbos, fit_score_iforest, fit_score_lof};
use uadb::metrics::{aucroc, variance_gap};

fn synthetic(kind: SyntheticKind, seed: u64) -> Dataset {
    scale_features(&generate_synthetic(kind, 300, 0.15, seed).unwrap())
}

#[test]
fn clustered_iforest_booster_keeps_teacher_quality() {
    let ds = synthetic(SyntheticKind::Clustered, 1);
    let labels = ds.labels().unwrap();
    let teacher = fit_score_iforest(&ds, 100, 256, 1).unwrap();
    let result = run_booster(&ds, &teacher, &BoosterConfig::default().with_seed(1)).unwrap();
    let t = aucroc(teacher.values(), labels).unwrap();
    let b = aucroc(result.final_scores.values(), labels).unwrap();
    assert!(b >= t - 0.02, "teacher {t}, booster {b}");
    assert!(variance_gap(result.variance_history.last().unwrap().values(), labels).unwrap() < 0.0);
}

#[test]
fn uadb_beats_naive_on_local_with_lof() {
    let ds = synthetic(SyntheticKind::Local, 1);
    let labels = ds.labels().unwrap();
    let teacher = fit_score_lof(&ds, 20).unwrap();
    let score = |s: Strategy| {
        let r = run_booster(&ds, &teacher, &BoosterConfig::default().with_strategy(s).with_seed(1)).unwrap();
        aucroc(r.final_scores.values(), labels).unwrap()
    };
    let (uadb, naive) = (score(Strategy::Uadb), score(Strategy::Naive));
    assert!(uadb >= naive, "uadb {uadb}, naive {naive}");
}

#[test]
fn false_negatives_climb_when_the_booster_helps() {
    let ds = synthetic(SyntheticKind::Global, 1);
    let labels = ds.labels().unwrap();
    let teacher = fit_score_hbos(&ds, 10).unwrap();
    let result = run_booster(&ds, &teacher, &BoosterConfig::default().with_seed(1)).unwrap();
    let t = aucroc(teacher.values(), labels).unwrap();
    let b = aucroc(result.final_scores.values(), labels).unwrap();
    assert!(b > t, "teacher {t}, booster {b}");
    let trace = correction_trace(&result, &ds, None).unwrap();
    let first = trace.ranks.first().unwrap().fn_.unwrap();
    let last = trace.ranks.last().unwrap().fn_.unwrap();
    assert!(last > first, "FN mean rank {first} -> {last}");
}
