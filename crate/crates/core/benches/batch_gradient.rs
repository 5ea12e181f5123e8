use std::hint::black_box;

use aicare::data::{generate_synthetic, CohortSpec, LabelConfig, Preprocessor, Sample};
use aicare::model::{ModelConfig, ModelParams};
use aicare::numerics::Activation;
use aicare::train::batch_gradient_sequential;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn samples(patients: usize) -> Vec<Sample> {
    let mut spec = CohortSpec::pd_default();
    spec.num_patients = patients;
    let (cohort, _) = generate_synthetic(&spec, 1).unwrap();
    let prep = Preprocessor::fit(&cohort).unwrap();
    prep.samples(&cohort, &LabelConfig::default(), cohort.data_end_date().unwrap())
        .unwrap()
}

fn bench_batch_gradient(c: &mut Criterion) {
    let all = samples(256);
    let params = ModelParams::init(&ModelConfig::new(all[0].input.num_features())).unwrap();
    let mut group = c.benchmark_group("batch_gradient");
    group.sample_size(10);
    for size in [32usize, 128, 256] {
        let batch: Vec<&Sample> = all.iter().take(size).collect();
        group.throughput(Throughput::Elements(size as u64));
        group.bench_with_input(BenchmarkId::new("sequential", size), &batch, |b, batch| {
            b.iter(|| batch_gradient_sequential(black_box(&params), batch, Activation::Softmax).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", size), &batch, |b, batch| {
            b.iter(|| aicare::train::batch_gradient_parallel(black_box(&params), batch, Activation::Softmax).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_batch_gradient);
criterion_main!(benches);
