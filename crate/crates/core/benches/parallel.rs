//! Parallel-vs-sequential benchmarks for the data-parallel kernels:
//! nearest-neighbor assignment, per-vertex rotation fits, multi-root
//! geodesics and surrogate proposal scoring.
//!
//! Build with `--no-default-features` to measure the fully sequential
//! crate; with default features the `*_seq` entries pin the baseline and
//! the unsuffixed ones use the rayon pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};

use shapecorr::alignment::{fit_rotations, fit_rotations_seq, solve_point_map, solve_point_map_seq};
use shapecorr::embedding::ProductEmbedding;
use shapecorr::mcmc::{score_proposals, score_proposals_seq, SurrogateConfig, SurrogateContext};
use shapecorr::mesh::{geodesic_distances_multi, geodesic_distances_multi_seq};
use shapecorr::synth;

fn random_embedding(n: usize, k: usize, seed: u64) -> ProductEmbedding {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut gen = |rows: usize, cols: usize| {
        DMatrix::from_fn(rows, cols, |_, _| rng.gen::<f64>() - 0.5)
    };
    ProductEmbedding {
        spectral: gen(n, k),
        coords: gen(n, 3),
        normals: gen(n, 3),
    }
}

fn bench_nn(c: &mut Criterion) {
    let mut group = c.benchmark_group("nn_search");
    group.sample_size(10);
    for &n in &[512usize, 2048] {
        let src = random_embedding(n, 26, 1);
        let tgt = random_embedding(n, 26, 2);
        group.bench_with_input(BenchmarkId::new("seq", n), &n, |b, _| {
            b.iter(|| solve_point_map_seq(&src, &tgt).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("par", n), &n, |b, _| {
            b.iter(|| solve_point_map(&src, &tgt).unwrap())
        });
    }
    group.finish();
}

fn bench_rotations(c: &mut Criterion) {
    let mesh = synth::biped(4, synth::ArmPose::LeftForward).build().unwrap();
    let rest = mesh.coords_matrix();
    let mut deformed = rest.clone();
    for i in 0..deformed.nrows() {
        let x = rest[(i, 0)];
        deformed[(i, 1)] += 0.1 * (4.0 * x).sin();
    }
    let mut group = c.benchmark_group("arap_rotations");
    group.sample_size(10);
    group.bench_function("seq", |b| b.iter(|| fit_rotations_seq(&mesh, &rest, &deformed)));
    group.bench_function("par", |b| b.iter(|| fit_rotations(&mesh, &rest, &deformed)));
    group.finish();
}

fn bench_geodesics(c: &mut Criterion) {
    let mesh = synth::icosphere(3).build().unwrap();
    let roots: Vec<usize> = (0..64).map(|i| i * 10).collect();
    let mut group = c.benchmark_group("geodesic_multi");
    group.sample_size(10);
    group.bench_function("seq", |b| {
        b.iter(|| geodesic_distances_multi_seq(&mesh, &roots).unwrap())
    });
    group.bench_function("par", |b| {
        b.iter(|| geodesic_distances_multi(&mesh, &roots).unwrap())
    });
    group.finish();
}

fn bench_proposals(c: &mut Criterion) {
    let src = synth::biped(2, synth::ArmPose::LeftForward).build().unwrap();
    let tgt = synth::biped(2, synth::ArmPose::RightForward).build().unwrap();
    let cfg = SurrogateConfig {
        vertex_budget: 150,
        surrogate_steps: 4,
        k_max_surr: 12,
        ..Default::default()
    };
    let ctx = SurrogateContext::new(&src, &tgt, &cfg).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let proposals: Vec<DMatrix<f64>> = (0..8)
        .map(|_| DMatrix::from_fn(6, 3, |_, _| 0.15 * (rng.gen::<f64>() - 0.5)))
        .collect();
    let mut group = c.benchmark_group("surrogate_proposals");
    group.sample_size(10);
    group.bench_function("seq", |b| b.iter(|| score_proposals_seq(&ctx, &proposals)));
    group.bench_function("par", |b| b.iter(|| score_proposals(&ctx, &proposals)));
    group.finish();
}

criterion_group!(benches, bench_nn, bench_rotations, bench_geodesics, bench_proposals);
criterion_main!(benches);
