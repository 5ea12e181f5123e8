#![allow(dead_code)]

use aicare::data::{ModelInput, OutcomeGroup, Sample, VisitLabel};
use aicare::model::{ModelConfig, ModelParams};
use aicare::numerics::Activation;
use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_input(rng: &mut ChaCha8Rng, n: usize, t: usize) -> ModelInput {
    ModelInput {
        baseline: [
            rng.random_range(-2.0..2.0),
            f64::from(rng.random_range(0..2u8)),
            rng.random_range(-2.0..2.0),
            f64::from(rng.random_range(0..2u8)),
        ],
        series: (0..n).map(|_| (0..t).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
    }
}

pub fn sample_from(input: ModelInput, labels: Vec<VisitLabel>) -> Sample {
    let t = input.num_visits();
    let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    Sample {
        patient_id: "p".into(),
        raw: input.series.clone(),
        input,
        labels,
        group: OutcomeGroup::Alive,
        dates: (0..t).map(|i| start + Days::new(90 * i as u64)).collect(),
    }
}

/// Random labels with at least one labeled visit.
pub fn random_labels(rng: &mut ChaCha8Rng, t: usize) -> Vec<VisitLabel> {
    loop {
        let labels: Vec<VisitLabel> = (0..t)
            .map(|_| match rng.random_range(0..3) {
                0 => VisitLabel::Low,
                1 => VisitLabel::High,
                _ => VisitLabel::Uncertain,
            })
            .collect();
        if labels.iter().any(|l| l.is_labeled()) {
            return labels;
        }
    }
}

pub fn random_model(seed: u64, n: usize, h: usize, activation: Activation) -> ModelParams {
    let cfg = ModelConfig { hidden: h, activation, seed, ..ModelConfig::new(n) };
    let mut p = ModelParams::init(&cfg).unwrap();
    // non-zero biases so every parameter group is exercised
    let mut r = rng(seed ^ 0x5eed);
    let entries = p.entries().to_vec();
    for e in entries.iter().filter(|e| e.is_bias()) {
        for v in &mut p.values_mut()[e.offset..e.offset + e.len()] {
            *v = r.random_range(-0.3..0.3);
        }
    }
    p
}
