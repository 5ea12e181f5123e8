mod common;

use aicare::data::{CauseOfDeath, OutcomeGroup};
use aicare::metrics::*;
use proptest::prelude::*;
use rand::Rng;

/// P(s+ > s−) + ½·P(s+ = s−) over all positive/negative pairs.
fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                num += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    num / pairs
}

/// Σ over distinct thresholds (high to low) of (R_k − R_{k−1})·P_k.
fn sweep_auprc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pos = labels.iter().filter(|l| **l).count() as f64;
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l).count() as f64;
        let predicted = scores.iter().filter(|s| **s >= t).count() as f64;
        let recall = tp / pos;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

fn random_instance(r: &mut rand_chacha::ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    loop {
        let n = r.random_range(2..=200);
        // coarse grid in half the cases to force ties
        let coarse = r.random_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| if coarse { f64::from(r.random_range(0..8u8)) / 8.0 } else { r.random::<f64>() })
            .collect();
        let labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.3)).collect();
        if labels.iter().any(|l| *l) && labels.iter().any(|l| !*l) {
            return (scores, labels);
        }
    }
}

#[test]
fn auroc_matches_pairwise_oracle() {
    let mut r = common::rng(100);
    for _ in 0..100 {
        let (s, l) = random_instance(&mut r);
        assert!((auroc(&s, &l).unwrap() - pairwise_auroc(&s, &l)).abs() < 1e-9);
    }
}

#[test]
fn auprc_matches_threshold_sweep_oracle() {
    let mut r = common::rng(200);
    for _ in 0..100 {
        let (s, l) = random_instance(&mut r);
        assert!((auprc(&s, &l).unwrap() - sweep_auprc(&s, &l)).abs() < 1e-9);
    }
}

#[test]
fn worked_examples() {
    let l = [false, false, true, true];
    assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &l).unwrap(), 0.75);
    // ranking +, −, + : precision 1 at the first hit and 2/3 at the second
    let ap = auprc(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
    assert!((ap - 5.0 / 6.0).abs() < 1e-15);
}

#[test]
fn degenerate_inputs_are_rejected() {
    assert!(matches!(auroc(&[0.1, 0.2], &[false, false]), Err(aicare::Error::DegenerateInput(_))));
    assert!(matches!(auprc(&[0.1, 0.2], &[false, false]), Err(aicare::Error::DegenerateInput(_))));
    assert!(matches!(auroc(&[f64::NAN, 0.2], &[true, false]), Err(aicare::Error::Numeric(_))));
    assert!(auroc(&[0.1], &[true, false]).is_err());
}

proptest! {
    #[test]
    fn monotone_transform_and_permutation_invariance(
        seed in 0u64..10_000,
        shift in -5.0f64..5.0,
        scale in 0.1f64..10.0,
    ) {
        let mut r = common::rng(seed);
        let (s, l) = random_instance(&mut r);
        let t: Vec<f64> = s.iter().map(|v| (scale * v + shift).exp()).collect();
        prop_assert!((auroc(&s, &l).unwrap() - auroc(&t, &l).unwrap()).abs() < 1e-12);
        prop_assert!((auprc(&s, &l).unwrap() - auprc(&t, &l).unwrap()).abs() < 1e-12);

        let mut idx: Vec<usize> = (0..s.len()).collect();
        for i in (1..idx.len()).rev() {
            idx.swap(i, r.random_range(0..=i));
        }
        let ps: Vec<f64> = idx.iter().map(|i| s[*i]).collect();
        let pl: Vec<bool> = idx.iter().map(|i| l[*i]).collect();
        prop_assert!((auroc(&s, &l).unwrap() - auroc(&ps, &pl).unwrap()).abs() < 1e-12);
        prop_assert!((auprc(&s, &l).unwrap() - auprc(&ps, &pl).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn complement_labels_complement_auroc(seed in 0u64..10_000) {
        let mut r = common::rng(seed);
        let (s, l) = random_instance(&mut r);
        let flipped: Vec<bool> = l.iter().map(|v| !v).collect();
        prop_assert!((auroc(&s, &l).unwrap() + auroc(&s, &flipped).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn random_scores_have_chance_level_metrics() {
    let mut r = common::rng(7);
    let n = 20_000;
    let labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.09)).collect();
    let scores: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let prevalence = labels.iter().filter(|l| **l).count() as f64 / n as f64;
    assert!((auroc(&scores, &labels).unwrap() - 0.5).abs() < 0.03);
    assert!((auprc(&scores, &labels).unwrap() - prevalence).abs() < 0.02);
}

#[test]
fn per_cause_evaluation_tracks_planted_difficulty() {
    // CVD deaths are well separated from survivors, infection deaths barely
    let mut r = common::rng(11);
    let mut visits = Vec::new();
    let mut push = |pid: String, group: OutcomeGroup, label: bool, score: f64| {
        visits.push(ScoredVisit { patient_id: pid, visit_index: 0, score, label, group });
    };
    for i in 0..300 {
        push(format!("a{i}"), OutcomeGroup::Alive, false, r.random_range(0.0..0.6));
    }
    for i in 0..60 {
        push(format!("c{i}"), OutcomeGroup::Died(Some(CauseOfDeath::Cvd)), true, r.random_range(0.5..1.0));
        push(format!("i{i}"), OutcomeGroup::Died(Some(CauseOfDeath::Infection)), true, r.random_range(0.1..0.7));
        push(format!("u{i}"), OutcomeGroup::Died(None), true, 0.9);
    }
    let rep = evaluate_by_cod(&visits).unwrap();
    let cvd = rep.causes["CVD"].auroc;
    let inf = rep.causes["Infection"].auroc;
    assert!(cvd > 0.95 && inf < 0.8 && cvd > inf, "cvd {cvd} infection {inf}");
    assert_eq!(rep.causes["CVD"].negatives, 300);
    assert_eq!(rep.causes.len(), 2);
    assert!(rep.notices.iter().any(|n| n.contains("unknown cause")));
}
