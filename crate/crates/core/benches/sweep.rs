use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cutoff_lab::mixing::mixing_times;
use cutoff_lab::simulate::sample_hitting_with;
use cutoff_lab::tree::enumerate_profiles;
use cutoff_lab::verify::{check_corpus, VerifyOptions};
use cutoff_lab::{build_profile, Execution, VertexPair};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn corpus(c: &mut Criterion) {
    let profiles = enumerate_profiles(5, 3).unwrap();
    let opts = VerifyOptions::default();
    let mut group = c.benchmark_group("check_corpus_h5_c3");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| check_corpus(&profiles, &opts, exec)));
    }
    group.finish();
}

fn mixing(c: &mut Criterion) {
    let profile = build_profile(&[2; 9]).unwrap();
    let grid: Vec<f64> = (1..20).map(|k| k as f64 / 20.0).collect();
    let mut group = c.benchmark_group("mixing_times_binary9");
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| mixing_times(&profile, &grid, 1 << 24, exec).unwrap())
        });
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let profile = build_profile(&[2, 2, 2, 2]).unwrap();
    let pair = VertexPair::new(4, 0, 0);
    let mut group = c.benchmark_group("sample_hitting");
    for n in [1_000u64, 10_000] {
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| sample_hitting_with(&profile, &pair, n, 7, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, corpus, mixing, sampling);
criterion_main!(benches);
