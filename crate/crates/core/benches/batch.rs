//! Sequential against rayon batch evaluation on two workloads: the flow
//! oracle over random instances and class counting over placement seeds.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dusec_core::exec;
use dusec_core::model::ProblemInstance;
use dusec_core::optimizer::lp_oracle;
use dusec_core::ratio::{frac, Ratio};
use dusec_core::storage::{asymptotic_profile, exact_profile, generate_decentralized};

fn instances(count: usize) -> Vec<ProblemInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    (0..count)
        .map(|_| {
            let n = rng.random_range(4..=7usize);
            let mut speeds: Vec<Ratio> =
                (0..n).map(|_| frac(rng.random_range(1..=20), 1)).collect();
            speeds.sort();
            ProblemInstance::from_alpha(&frac(rng.random_range(5..=15), 4), speeds).unwrap()
        })
        .collect()
}

fn oracle(inst: &ProblemInstance) -> Ratio {
    let profile = asymptotic_profile(inst).unwrap();
    lp_oracle(inst, &profile, 1).unwrap()
}

fn class_counts(seed: &u64) -> usize {
    let storage = generate_decentralized(16000, 8000, 4, *seed).unwrap();
    exact_profile(&storage).unwrap().sizes().len()
}

fn bench(c: &mut Criterion) {
    let batch = instances(64);
    let seeds: Vec<u64> = (0..32).collect();

    let mut group = c.benchmark_group("oracle_batch");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("sequential", batch.len()), |b| {
        b.iter(|| exec::sequential_map(&batch, oracle))
    });
    #[cfg(feature = "parallel")]
    group.bench_function(BenchmarkId::new("parallel", batch.len()), |b| {
        b.iter(|| exec::parallel_map(&batch, oracle))
    });
    group.finish();

    let mut group = c.benchmark_group("placement_seeds");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("sequential", seeds.len()), |b| {
        b.iter(|| exec::sequential_map(&seeds, class_counts))
    });
    #[cfg(feature = "parallel")]
    group.bench_function(BenchmarkId::new("parallel", seeds.len()), |b| {
        b.iter(|| exec::parallel_map(&seeds, class_counts))
    });
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
