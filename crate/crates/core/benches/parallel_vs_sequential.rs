//! Batch workloads through the rayon-backed `par_map` and the sequential
//! `seq_map`: controllability samples and short closed-loop seed batches.

use criterion::{criterion_group, criterion_main, Criterion};
use emff_core::controllability::{accessibility_rank, AffineSystem};
use emff_core::parallel::{par_map, seq_map};
use emff_core::scenario::{sample_around, Scenario};
use emff_core::sim::{simulate, RunOptions};
use emff_core::DVec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn rank_states(sys: &AffineSystem, count: usize) -> Vec<DVec> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let target = DVec::zeros(sys.swarm.dim_q());
    (0..count)
        .map(|_| {
            let q = sample_around(&sys.swarm, &target, 1.0, 0.5, &mut rng);
            sys.join(&q, &DVec::zeros(q.len()))
        })
        .collect()
}

fn bench_rank(c: &mut Criterion) {
    let sc = Scenario::paper_fig123();
    let sys = AffineSystem::new(sc.swarm.clone()).unwrap();
    let states = rank_states(&sys, 16);
    let mut g = c.benchmark_group("accessibility_rank_x16");
    g.bench_function("parallel", |b| {
        b.iter(|| black_box(par_map(&states, |x| accessibility_rank(&sys, x).map(|r| r.rank).ok())))
    });
    g.bench_function("sequential", |b| {
        b.iter(|| black_box(seq_map(&states, |x| accessibility_rank(&sys, x).map(|r| r.rank).ok())))
    });
    g.finish();
}

fn bench_seeds(c: &mut Criterion) {
    let sc = Scenario::paper_fig123();
    let seeds: Vec<u64> = (0..4).collect();
    let run = |&seed: &u64| {
        let opts = RunOptions { seed: Some(seed), duration: Some(0.2), ..RunOptions::default() };
        simulate(&sc, &opts).map(|o| o.summary.final_error).ok()
    };
    let mut g = c.benchmark_group("closed_loop_4_seeds_0.2s");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| black_box(par_map(&seeds, run))));
    g.bench_function("sequential", |b| b.iter(|| black_box(seq_map(&seeds, run))));
    g.finish();
}

criterion_group!(benches, bench_rank, bench_seeds);
criterion_main!(benches);
