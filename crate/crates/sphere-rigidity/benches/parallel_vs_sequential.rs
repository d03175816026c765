use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sphere_rigidity::deficits::deficit_report_with;
use sphere_rigidity::forms::field_integrals_with;
use sphere_rigidity::harmonic_basis::SphereMap;
use sphere_rigidity::par::Mode;
use sphere_rigidity::poly::VecPoly;
use sphere_rigidity::quadrature::build_sphere_grid;
use sphere_rigidity::random;

fn deficits(c: &mut Criterion) {
    let mut rng = random::rng(1);
    let u = SphereMap::Poly(VecPoly::identity(3).add(&random::poly_map(&mut rng, 3, 3, 3, 0.2)));
    let mut group = c.benchmark_group("deficit_report");
    for res in [32usize, 96] {
        let grid = Arc::new(build_sphere_grid(3, res).unwrap());
        for mode in [Mode::Sequential, Mode::Parallel] {
            group.bench_with_input(BenchmarkId::new(format!("{mode:?}"), grid.len()), &grid, |b, g| {
                b.iter(|| deficit_report_with(mode, black_box(&u), Some(g)).unwrap())
            });
        }
    }
    group.finish();
}

fn field_integrals(c: &mut Criterion) {
    let mut rng = random::rng(2);
    let w = SphereMap::Poly(random::poly_map(&mut rng, 4, 4, 3, 1.0));
    let grid = Arc::new(build_sphere_grid(4, 32).unwrap());
    let mut group = c.benchmark_group("field_integrals_n4");
    for mode in [Mode::Sequential, Mode::Parallel] {
        group.bench_function(format!("{mode:?}"), |b| {
            b.iter(|| field_integrals_with(mode, black_box(&w), Some(&grid)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, deficits, field_integrals);
criterion_main!(benches);
