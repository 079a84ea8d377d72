//! Compare the data-parallel and sequential batch paths: Gram-oracle
//! assembly and the randomized conjugate-equation suite.
//!
//! Build with the default `parallel` feature for the rayon-backed Auto mode;
//! without it both modes run the same sequential code.

use bimcalc::exec::Parallelism;
use bimcalc::{Bimodule, TracialAlgebra};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn gram_instance() -> (Bimodule, Bimodule) {
    let l = TracialAlgebra::new(vec![1, 2]).unwrap();
    let m = TracialAlgebra::new(vec![2, 1]).unwrap();
    let n = TracialAlgebra::new(vec![2]).unwrap();
    let y = Bimodule::new(m.clone(), n, vec![vec![1, 2]]).unwrap();
    let x = Bimodule::new(l, m, vec![vec![1, 1], vec![1, 0]]).unwrap();
    (y, x)
}

fn bench_gram_oracle(c: &mut Criterion) {
    let (y, x) = gram_instance();
    let mut group = c.benchmark_group("gram_oracle");
    group.bench_function("auto", |b| {
        b.iter(|| {
            let g = bimcalc::gram::fuse_gram_oracle(black_box(&y), black_box(&x), Parallelism::Auto)
                .unwrap();
            black_box(g.dim())
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let g = bimcalc::gram::fuse_gram_oracle(
                black_box(&y),
                black_box(&x),
                Parallelism::Sequential,
            )
            .unwrap();
            black_box(g.dim())
        })
    });
    group.finish();
}

fn conjugate_suite(mode: Parallelism, instances: usize) -> f64 {
    use rand::SeedableRng;
    let worst = bimcalc::exec::map_indexed(mode, instances, |i| {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(i as u64);
        let x = random_bimodule(&mut rng);
        let sol = bimcalc::duality::solution_from_bases(&x).unwrap();
        let (r1, r2) = bimcalc::duality::check_conjugate_equations(&sol).unwrap();
        r1.max(r2)
    });
    worst.into_iter().fold(0.0, f64::max)
}

fn random_bimodule(rng: &mut impl rand::Rng) -> Bimodule {
    loop {
        let sm = rng.random_range(1..=3usize);
        let sn = rng.random_range(1..=3usize);
        let m = TracialAlgebra::new((0..sm).map(|_| rng.random_range(1..=3)).collect()).unwrap();
        let n = TracialAlgebra::new((0..sn).map(|_| rng.random_range(1..=3)).collect()).unwrap();
        let mult: Vec<Vec<usize>> = (0..sn)
            .map(|_| (0..sm).map(|_| rng.random_range(0..=2)).collect())
            .collect();
        let x = Bimodule::new(m, n, mult).unwrap();
        if !x.is_zero() {
            return x;
        }
    }
}

fn bench_conjugate_suite(c: &mut Criterion) {
    let mut group = c.benchmark_group("conjugate_suite_16");
    group.bench_function("auto", |b| {
        b.iter(|| black_box(conjugate_suite(Parallelism::Auto, 16)))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(conjugate_suite(Parallelism::Sequential, 16)))
    });
    group.finish();
}

criterion_group!(benches, bench_gram_oracle, bench_conjugate_suite);
criterion_main!(benches);
