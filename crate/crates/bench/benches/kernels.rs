use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use enda::ensemble::predicted_anomalies;
use enda::etkf::etkf_transform;
use enda::forward::{solve_pressure, GridSpec, PermeabilityField};
use enda::priors::{exp_covariance, kl_basis, MEAN_LOG_K};
use enda::transport::{cost_matrix, solve_ot_1d, solve_ot_exact};
use enda::{Ensemble, NoiseCovariance, ObservationSet, PredictedData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ensemble(rng: &mut ChaCha8Rng, members: usize, dim: usize) -> Ensemble {
    let data = (0..members * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ensemble::from_row_major(members, dim, data).unwrap()
}

fn weights(rng: &mut ChaCha8Rng, members: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..members).map(|_| rng.random_range(0.0f64..4.0).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

fn transport(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("transport");
    group.sample_size(10);
    for members in [50, 200, 500] {
        let e = ensemble(&mut rng, members, 5);
        let w = weights(&mut rng, members);
        let cost = cost_matrix(&e);
        group.bench_with_input(BenchmarkId::new("network_simplex", members), &members, |b, _| {
            b.iter(|| solve_ot_exact(black_box(&cost), black_box(&w)).unwrap())
        });
        let values = e.coordinate(0);
        group.bench_with_input(BenchmarkId::new("univariate", members), &members, |b, _| {
            b.iter(|| solve_ot_1d(black_box(&values), black_box(&w)).unwrap())
        });
    }
    group.finish();
}

fn etkf(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("etkf_transform");
    for members in [100, 1000] {
        let ny = 16;
        let y = ensemble(&mut rng, members, ny);
        let yp = PredictedData::from_rows(&y.members().collect::<Vec<_>>()).unwrap();
        let obs = ObservationSet::new(
            vec![0.0; ny],
            NoiseCovariance::isotropic(ny, 0.0081).unwrap(),
            vec![[0.5, 0.5]; ny],
        )
        .unwrap();
        let a = predicted_anomalies(&yp).unwrap();
        let mean = yp.mean();
        group.bench_with_input(BenchmarkId::from_parameter(members), &members, |b, _| {
            b.iter(|| etkf_transform(black_box(&a), &obs, &mean).unwrap())
        });
    }
    group.finish();
}

fn darcy(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut group = c.benchmark_group("darcy_solve");
    group.sample_size(20);
    for n in [20, 50] {
        let g = GridSpec::new(n).unwrap();
        let log_k: Vec<f64> = (0..g.cells())
            .map(|_| MEAN_LOG_K + rng.random_range(-1.0..1.0))
            .collect();
        let k = PermeabilityField::from_log(&log_k).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_pressure(black_box(&k), &g).unwrap())
        });
    }
    group.finish();
}

fn kl(c: &mut Criterion) {
    let mut group = c.benchmark_group("kl_basis");
    group.sample_size(10);
    let g = GridSpec::new(20).unwrap();
    let cov = exp_covariance(&g, 0.5).unwrap();
    group.bench_function("n20", |b| b.iter(|| kl_basis(black_box(&cov), MEAN_LOG_K).unwrap()));
    group.finish();
}

criterion_group!(benches, transport, etkf, darcy, kl);
criterion_main!(benches);
