//! Parallel against sequential execution for the stages that fan out work:
//! per-gene regulation fits, biclustering permutations and the EBIC grid.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use meint::bicluster::{extract_modules, BiclusterConfig};
use meint::par::Execution;
use meint::pipeline::{run_pipeline, PipelineConfig, Variant};
use meint::regulation::{estimate_regulation, LambdaRule};
use meint::simbench::{generate_dataset, SimConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn dataset() -> meint::data::Dataset {
    let cfg = SimConfig {
        scale_factor: 0.2,
        seed: 11,
        ..SimConfig::default()
    };
    let (ds, _) = generate_dataset(&cfg).expect("simulated dataset");
    ds.standardize().expect("standardized").0
}

fn stages(c: &mut Criterion) {
    let std = dataset();
    let theta = estimate_regulation(&std, LambdaRule::PerColumnBic, Execution::Sequential).unwrap();
    let bicluster = BiclusterConfig {
        permutations: 20,
        ..BiclusterConfig::default()
    };

    let mut group = c.benchmark_group("parallel_vs_sequential");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("regulation", name), &exec, |b, &exec| {
            b.iter(|| estimate_regulation(&std, LambdaRule::PerColumnBic, exec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("modules", name), &exec, |b, &exec| {
            b.iter(|| extract_modules(&theta, &bicluster, exec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("alt3_pipeline", name), &exec, |b, &exec| {
            b.iter(|| run_pipeline(&std, Variant::Alt3, &PipelineConfig::default(), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
