use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ecppdm::config::PipelineConfig;
use ecppdm::elgamal::keygen;
use ecppdm::mining::run_experiment;
use ecppdm::perturb::transform_dataset;
use ecppdm::transport::{encrypt_batch, SourceManifest};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", single), ("parallel", all)]
}

fn bench(c: &mut Criterion) {
    let s = PipelineConfig::default().validate().unwrap();
    let model = s.model.clone().unwrap();
    let data = model.generate(800, s.seed);
    let keys = keygen(&s.domain, 987_654).unwrap();
    let manifest = SourceManifest {
        source_id: "S1".into(),
        domain: s.domain,
        recipient_public: keys.public_point(),
        schema: data.schema().clone(),
        record_count: data.len(),
    };
    let perturbed = transform_dataset(&data, &s.plan).unwrap();

    let mut group = c.benchmark_group("encrypt_batch");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            pool.install(|| b.iter(|| encrypt_batch(&data, &manifest, &s.encoding, 1).unwrap()))
        });
    }
    group.finish();

    let big = model.generate(20_000, s.seed);
    let mut group = c.benchmark_group("transform_dataset");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            pool.install(|| b.iter(|| transform_dataset(&big, &s.plan).unwrap()))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("run_experiment");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            pool.install(|| b.iter(|| run_experiment(&data, &perturbed, Some(&model), &s.experiment, "bench").unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
