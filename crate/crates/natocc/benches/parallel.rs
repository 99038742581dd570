//! Data-parallel hot loops against their sequential reference paths.
//!
//! `cargo bench -p natocc` (the default `parallel` feature enables rayon;
//! with `--no-default-features` both benches run the sequential code, which
//! is useful as a sanity baseline).

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use natocc::fock::{enumerate_determinants, sector_filter, SectorLabel};
use natocc::gpc::{
    constraints_from_sector_map, perturbation_response, perturbation_response_batch,
    ResponseOptions,
};
use natocc::linalg::CMatrix;
use natocc::model::{
    build_hubbard, build_many_body_matrix, build_many_body_matrix_seq, BasisKind,
};
use natocc::sector_map::{build_amplitude_map, invert_map};

fn bench_matrix_build(c: &mut Criterion) {
    // C(12,4) = 495 determinants: a dense 495 x 495 Slater-Condon assembly.
    let basis = enumerate_determinants(4, 6).unwrap();
    let ints = build_hubbard(6, 1.0, 2.0, true, BasisKind::Momentum).unwrap();

    let mut group = c.benchmark_group("many_body_matrix_495");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(build_many_body_matrix(black_box(&basis), black_box(&ints))))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(build_many_body_matrix_seq(black_box(&basis), black_box(&ints))))
    });
    group.finish();
}

fn bench_perturbation_batch(c: &mut Criterion) {
    let dets = enumerate_determinants(3, 4).unwrap();
    let basis = sector_filter(&dets, SectorLabel::new(1, 1), 4);
    let map = build_amplitude_map(&basis, 4).unwrap();
    let set = invert_map(&map).unwrap();
    let constraints = constraints_from_sector_map(&set);
    let constraint = &constraints.constraints[0];
    let ints = build_hubbard(4, 1.0, 1.0, true, BasisKind::Momentum).unwrap();
    let h = build_many_body_matrix(&basis, &ints);
    let orbital_map: Vec<usize> = (0..8).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let vs: Vec<CMatrix> = (0..64)
        .map(|_| {
            let m = CMatrix::from_fn(6, 6, |_, _| {
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            });
            (&m + m.adjoint()).scale(0.5)
        })
        .collect();
    let lambdas = [1e-3];
    let opts = ResponseOptions::default();

    let mut group = c.benchmark_group("perturbation_batch_64");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            black_box(
                perturbation_response_batch(
                    black_box(&h),
                    black_box(&vs),
                    constraint,
                    &basis,
                    &orbital_map,
                    &lambdas,
                    &opts,
                )
                .unwrap(),
            )
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let tables: Vec<_> = vs
                .iter()
                .map(|v| {
                    perturbation_response(
                        black_box(&h),
                        v,
                        constraint,
                        &basis,
                        &orbital_map,
                        &lambdas,
                        &opts,
                    )
                    .unwrap()
                })
                .collect();
            black_box(tables)
        })
    });
    group.finish();
}

criterion_group!(benches, bench_matrix_build, bench_perturbation_batch);
criterion_main!(benches);
