mod common;

use aicare::data::{Cohort, LabelConfig, Outcome, PatientRecord, Preprocessor, Visit};
use aicare::interpret::*;
use aicare::model::Checkpoint;
use aicare::numerics::Activation;
use chrono::{Days, NaiveDate};
use proptest::prelude::*;
use rand::Rng;

fn day(n: u64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).unwrap() + Days::new(n)
}

fn one_patient_cohort(n: usize) -> Cohort {
    let mut r = common::rng(3);
    let visit = |d: u64, r: &mut rand_chacha::ChaCha8Rng| Visit {
        date: day(d),
        values: (0..n).map(|_| Some(r.random_range(0.0..10.0))).collect(),
    };
    let patient = PatientRecord {
        patient_id: "A1".into(),
        baseline: [55.0, 0.0, 1.6, 1.0],
        // death at day 800: visits 0 and 500 are High, day 100 is Uncertain
        visits: vec![visit(0, &mut r), visit(100, &mut r), visit(500, &mut r)],
        outcome: Outcome::Died { date: day(800), cause: None },
    };
    let names = (0..n).map(|i| format!("f{i}")).collect();
    Cohort::new(names, vec![patient]).unwrap()
}

fn checkpoint_for(cohort: &Cohort, activation: Activation) -> Checkpoint {
    let params = common::random_model(11, cohort.num_features(), 6, activation);
    Checkpoint::new(&params, &Preprocessor::fit(cohort).unwrap()).unwrap()
}

fn record(pid: &str, t: usize, feature: &str, value: f64, attention: f64, risk: f64) -> ImportanceRecord {
    ImportanceRecord { patient_id: pid.into(), visit_index: t, feature: feature.into(), value, attention, risk }
}

#[test]
fn one_record_per_labeled_visit_and_feature() {
    let cohort = one_patient_cohort(16);
    let ck = checkpoint_for(&cohort, Activation::Sparsemax);
    let recs = collect_importance(&ck, &cohort, &LabelConfig::default(), day(3000), Activation::Sparsemax).unwrap();
    assert_eq!(recs.len(), 32);
    assert!(recs.iter().all(|r| r.visit_index != 1));
}

#[test]
fn recorded_attention_sums_to_one_per_visit() {
    let cohort = one_patient_cohort(16);
    for act in [Activation::Softmax, Activation::Sparsemax] {
        let ck = checkpoint_for(&cohort, act);
        let recs = collect_importance(&ck, &cohort, &LabelConfig::default(), day(3000), act).unwrap();
        for visit in recs.chunks(16) {
            let s: f64 = visit.iter().map(|r| r.attention).sum();
            assert!((s - 1.0).abs() < 1e-12, "{act:?}: sum {s}");
            assert!(visit.iter().all(|r| r.attention >= 0.0));
        }
    }
}

#[test]
fn collection_is_deterministic_and_reports_raw_values() {
    let cohort = one_patient_cohort(4);
    let ck = checkpoint_for(&cohort, Activation::Sparsemax);
    let a = collect_importance(&ck, &cohort, &LabelConfig::default(), day(3000), Activation::Sparsemax).unwrap();
    let b = collect_importance(&ck, &cohort, &LabelConfig::default(), day(3000), Activation::Sparsemax).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let first = &cohort.patients[0].visits[0].values;
    for (n, r) in a.iter().take(4).enumerate() {
        assert_eq!(Some(r.value), first[n]);
    }
}

#[test]
fn feature_mismatch_is_config_error() {
    let cohort = one_patient_cohort(4);
    let ck = checkpoint_for(&one_patient_cohort(3), Activation::Sparsemax);
    let err = collect_importance(&ck, &cohort, &LabelConfig::default(), day(3000), Activation::Sparsemax);
    assert!(matches!(err, Err(aicare::Error::Config(_))));
}

fn heatmap_cohort() -> Cohort {
    use aicare::data::CauseOfDeath;
    let mk = |id: &str, outcome| PatientRecord {
        patient_id: id.into(),
        baseline: [60.0, 1.0, 1.7, 0.0],
        visits: vec![Visit { date: day(0), values: vec![Some(1.0); 3] }],
        outcome,
    };
    Cohort::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![
            mk("p1", Outcome::Alive),
            mk("p2", Outcome::Alive),
            mk("p3", Outcome::Died { date: day(10), cause: Some(CauseOfDeath::Cvd) }),
        ],
    )
    .unwrap()
}

fn records_with(pattern: impl Fn(&str) -> [f64; 3]) -> Vec<ImportanceRecord> {
    let mut out = Vec::new();
    for pid in ["p1", "p2", "p3"] {
        for t in 0..2 {
            for (f, a) in ["a", "b", "c"].iter().zip(pattern(pid)) {
                out.push(record(pid, t, f, 1.0, a, 0.5));
            }
        }
    }
    out
}

#[test]
fn uniform_attention_gives_uniform_cells() {
    let h = cod_heatmap(&records_with(|_| [1.0 / 3.0; 3]), &heatmap_cohort()).unwrap();
    assert_eq!(h.rows.len(), 2);
    for row in &h.rows {
        assert!(row.cells.iter().all(|c| (c - 1.0 / 3.0).abs() < 1e-15));
    }
    assert!(h.notices.iter().any(|n| n.starts_with("CVE")));
}

#[test]
fn disjoint_group_patterns_are_reproduced() {
    let recs = records_with(|pid| if pid == "p3" { [0.0, 0.0, 1.0] } else { [0.6, 0.4, 0.0] });
    let h = cod_heatmap(&recs, &heatmap_cohort()).unwrap();
    assert_eq!(h.rows[0].group, "Alive");
    assert_eq!(h.rows[0].cells, vec![0.6, 0.4, 0.0]);
    assert_eq!(h.rows[1].group, "CVD");
    assert_eq!(h.rows[1].cells, vec![0.0, 0.0, 1.0]);
}

proptest! {
    #[test]
    fn heatmap_cells_are_convex_combinations(atts in proptest::collection::vec(0.0f64..1.0, 18)) {
        let mut recs = records_with(|_| [0.0; 3]);
        for (r, a) in recs.iter_mut().zip(&atts) {
            r.attention = *a;
        }
        let h = cod_heatmap(&recs, &heatmap_cohort()).unwrap();
        for row in &h.rows {
            for (c, f) in row.cells.iter().zip(["a", "b", "c"]) {
                let pids: &[&str] = if row.group == "Alive" { &["p1", "p2"] } else { &["p3"] };
                let vals: Vec<f64> = recs
                    .iter()
                    .filter(|r| r.feature == f && pids.contains(&r.patient_id.as_str()))
                    .map(|r| r.attention)
                    .collect();
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*c >= lo - 1e-15 && *c <= hi + 1e-15);
                prop_assert!((0.0..=1.0).contains(c));
            }
        }
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn constant_attention_gives_flat_curve() {
    let pts: Vec<(f64, f64, f64)> = grid(0.0, 10.0, 400).into_iter().map(|v| (v, 0.1, 0.2)).collect();
    let c = curve_from_points("x", &pts, DEFAULT_BINS).unwrap();
    assert_eq!(c.bins(), 40);
    assert!(c.mean_attention.iter().all(|a| (a.unwrap() - 0.1).abs() < 1e-15));
    let fit = classify_shape(&c).unwrap();
    assert_eq!(fit.shape, Shape::Irregular);
    assert_eq!(recommend(&c, &fit), Recommendation::Unknown);
}

#[test]
fn two_populated_bins_leave_the_rest_absent() {
    let mut pts = vec![(0.0, 0.2, 0.1); 50];
    pts.extend(vec![(10.0, 0.4, 0.3); 50]);
    let c = curve_from_points("x", &pts, 10).unwrap();
    assert_eq!(c.populated(), 2);
    assert_eq!(c.counts.iter().sum::<usize>(), 100);
    for i in 0..c.bins() {
        assert_eq!(c.counts[i] == 0, c.mean_attention[i].is_none());
        assert_eq!(c.counts[i] == 0, c.mean_risk[i].is_none());
    }
    assert!(matches!(classify_shape(&c), Err(aicare::Error::InsufficientData(_))));
}

#[test]
fn fewer_points_than_bins_reduces_bins() {
    let pts: Vec<(f64, f64, f64)> = grid(0.0, 1.0, 7).into_iter().map(|v| (v, 0.5, 0.5)).collect();
    assert_eq!(curve_from_points("x", &pts, 40).unwrap().bins(), 7);
    assert!(matches!(curve_from_points("x", &[], 40), Err(aicare::Error::InsufficientData(_))));
}

#[test]
fn analytic_v_turns_at_32_with_higher_advice() {
    // risk falls as the value rises
    let pts: Vec<(f64, f64, f64)> = grid(20.0, 45.0, 2001)
        .into_iter()
        .map(|v| (v, (v - 32.0).abs() / 50.0, 1.0 - v / 50.0))
        .collect();
    let c = curve_from_points("Albumin", &pts, DEFAULT_BINS).unwrap();
    let fit = classify_shape(&c).unwrap();
    assert_eq!(fit.shape, Shape::V);
    let m = fit.min_bin;
    assert!(c.edges[m] <= 32.0 + c.bin_width() && c.edges[m + 1] >= 32.0 - c.bin_width());
    assert!((fit.turning_point.unwrap() - 32.0).abs() <= c.bin_width());
    let rec = recommend(&c, &fit);
    assert_eq!(rec, Recommendation::Higher);
    assert!(rec.describe(fit.turning_point).starts_with("> 3"));
}

#[test]
fn analytic_l_turns_at_130_with_at_least_advice() {
    let pts: Vec<(f64, f64, f64)> = grid(60.0, 200.0, 2001)
        .into_iter()
        .map(|v| (v, ((130.0 - v) / 130.0).max(0.0), 0.1))
        .collect();
    let c = curve_from_points("SBP", &pts, DEFAULT_BINS).unwrap();
    let fit = classify_shape(&c).unwrap();
    assert_eq!(fit.shape, Shape::L);
    assert!((fit.turning_point.unwrap() - 130.0).abs() <= c.bin_width(), "{:?}", fit.turning_point);
    assert_eq!(recommend(&c, &fit), Recommendation::AtLeast);
}

#[test]
fn mirrored_l_gives_not_exceed() {
    let pts: Vec<(f64, f64, f64)> = grid(0.0, 100.0, 2001)
        .into_iter()
        .map(|v| (v, ((v - 40.0) / 100.0).max(0.0), 0.1))
        .collect();
    let c = curve_from_points("x", &pts, DEFAULT_BINS).unwrap();
    let fit = classify_shape(&c).unwrap();
    assert_eq!(fit.shape, Shape::L);
    assert!((fit.turning_point.unwrap() - 40.0).abs() <= c.bin_width());
    assert_eq!(recommend(&c, &fit), Recommendation::NotExceed);
}

#[test]
fn small_noise_is_irregular() {
    let mut r = common::rng(5);
    let pts: Vec<(f64, f64, f64)> = (0..4000)
        .map(|_| (r.random_range(3.0..12.0), 0.01 + r.random_range(0.0..0.04), r.random_range(0.0..1.0)))
        .collect();
    let c = curve_from_points("WBC", &pts, DEFAULT_BINS).unwrap();
    let fit = classify_shape(&c).unwrap();
    assert_eq!(fit.shape, Shape::Irregular);
    assert_eq!(fit.turning_point, None);
    assert_eq!(recommend(&c, &fit), Recommendation::Unknown);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn duplicating_records_keeps_shape(seed in 0u64..1000, copies in 2usize..4) {
        let mut r = common::rng(seed);
        let tau = r.random_range(30.0..40.0);
        let pts: Vec<(f64, f64, f64)> = (0..600)
            .map(|_| {
                let v: f64 = r.random_range(20.0..50.0);
                (v, (v - tau).abs() / 30.0 + r.random_range(0.0..0.05), r.random_range(0.0..1.0))
            })
            .collect();
        let dup: Vec<(f64, f64, f64)> = pts.iter().flat_map(|p| std::iter::repeat_n(*p, copies)).collect();
        let a = classify_shape(&curve_from_points("x", &pts, DEFAULT_BINS).unwrap()).unwrap();
        let b = classify_shape(&curve_from_points("x", &dup, DEFAULT_BINS).unwrap()).unwrap();
        prop_assert_eq!(a.shape, b.shape);
        prop_assert_eq!(a.turning_point, b.turning_point);
    }
}

#[test]
fn summaries_cover_every_feature_once() {
    let mut recs = Vec::new();
    let mut r = common::rng(9);
    for i in 0..300 {
        let v: f64 = r.random_range(20.0..50.0);
        recs.push(record(&format!("p{i}"), 0, "Albumin", v, (v - 34.0).abs() / 20.0, 1.0 - v / 60.0));
        recs.push(record(&format!("p{i}"), 0, "Sparse", 1.0, 0.0, 0.5));
    }
    let feats = vec!["Albumin".to_string(), "Sparse".to_string(), "Absent".to_string()];
    let out = summarize_curves(&recs, &feats, &Default::default(), Activation::Sparsemax).unwrap();
    let names: Vec<&str> = out.features.iter().map(|c| c.feature.as_str()).collect();
    assert_eq!(names, ["Albumin", "Sparse", "Absent"]);
    assert_eq!(out.features[0].shape, Shape::V);
    for c in &out.features[1..] {
        assert_eq!((c.shape, c.recommendation), (Shape::Irregular, Recommendation::Unknown));
        assert!(c.notice.is_some());
    }
}
