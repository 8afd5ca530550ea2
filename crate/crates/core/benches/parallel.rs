//! Sequential vs rayon execution of the data-parallel kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use helical_core::bloch::{self, LatticeSum};
use helical_core::dynamics::{evolve, initial_state, uniform_times, Propagator};
use helical_core::field::{intensity_map, FieldPlane};
use helical_core::geometry::build_helix;
use helical_core::hamiltonian::{assemble_with, effective};
use helical_core::{Execution, Handedness, HelixParams, Spin};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn helix(turns: usize) -> HelixParams {
    HelixParams {
        turns,
        ..HelixParams::reference(Handedness::Left)
    }
}

fn bench_assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble");
    for turns in [20, 80] {
        let g = build_helix(&helix(turns)).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, g.n_sites()), &g, |b, g| {
                b.iter(|| assemble_with(black_box(g), exec).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_evolution(c: &mut Criterion) {
    let g = build_helix(&helix(20)).unwrap();
    let coupling = assemble_with(&g, Execution::Sequential).unwrap();
    let prop = Propagator::new(&effective(&coupling, false)).unwrap();
    let s0 = initial_state(g.n_sites(), 0, 0.5).unwrap();
    let times = uniform_times(15.8, 317);
    let mut group = c.benchmark_group("evolve");
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| evolve(&s0, &prop, &g, black_box(&times), exec).unwrap()));
    }
    group.finish();
}

fn bench_bands(c: &mut Criterion) {
    let p = helix(20);
    let grid = bloch::bz_grid(p.pitch, 101);
    let mut group = c.benchmark_group("band_structure");
    group.sample_size(10);
    for (name, exec) in MODES {
        let sum = LatticeSum::with_execution(&p, 500, exec).unwrap();
        group.bench_function(name, |b| b.iter(|| bloch::band_structure(&sum, black_box(&grid), false, exec).unwrap()));
    }
    group.finish();
}

fn bench_field(c: &mut Criterion) {
    let g = build_helix(&helix(20)).unwrap();
    let coupling = assemble_with(&g, Execution::Sequential).unwrap();
    let s = Propagator::new(&effective(&coupling, false))
        .unwrap()
        .propagate_to(&initial_state(g.n_sites(), 0, 0.5).unwrap(), 1.0)
        .unwrap();
    let plane = FieldPlane {
        n_u: 51,
        n_v: 101,
        ..FieldPlane::default_for(&g)
    };
    let mut group = c.benchmark_group("intensity_map");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| intensity_map(&g, &s, black_box(&plane), Spin::Up, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_assembly, bench_evolution, bench_bands, bench_field);
criterion_main!(benches);
