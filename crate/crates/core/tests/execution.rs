//! The parallel and sequential paths must give bit-identical results.

use helical_core::bloch::{self, LatticeSum};
use helical_core::dynamics::{evolve, initial_state, uniform_times, Propagator};
use helical_core::field::{intensity_map, FieldPlane};
use helical_core::geometry::build_helix;
use helical_core::hamiltonian::{assemble_with, effective};
use helical_core::topology::{zak_phase_with, BandGroup, ZakOptions};
use helical_core::{Execution, Handedness, HelixParams, Spin};

const BOTH: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

#[test]
fn coupling_assembly() {
    let g = build_helix(&HelixParams::reference(Handedness::Left)).unwrap();
    let [a, b] = BOTH.map(|e| assemble_with(&g, e).unwrap());
    assert!(a.j == b.j);
    assert!(a.gamma == b.gamma);
}

#[test]
fn time_evolution() {
    let g = build_helix(&HelixParams::reference(Handedness::Right)).unwrap();
    let c = assemble_with(&g, Execution::Sequential).unwrap();
    let prop = Propagator::new(&effective(&c, false)).unwrap();
    let s0 = initial_state(g.n_sites(), 0, 0.5).unwrap();
    let times = uniform_times(8.0, 41);
    let [a, b] = BOTH.map(|e| evolve(&s0, &prop, &g, &times, e).unwrap());
    assert_eq!(a, b);
}

#[test]
fn band_structure() {
    let p = HelixParams::reference(Handedness::Left);
    let grid = bloch::bz_grid(p.pitch, 31);
    let [a, b] = BOTH.map(|e| {
        let sum = LatticeSum::with_execution(&p, 100, e).unwrap();
        bloch::band_structure(&sum, &grid, false, e).unwrap()
    });
    assert_eq!(a.bands, b.bands);
    assert_eq!(a.continuation, b.continuation);
}

#[test]
fn zak_phase() {
    let p = HelixParams::reference(Handedness::Left);
    let opts = ZakOptions {
        n_k: 60,
        m_cut: 100,
        hermitian_only: true,
    };
    let [a, b] = BOTH.map(|e| {
        let sum = LatticeSum::with_execution(&p, opts.m_cut, e).unwrap();
        zak_phase_with(&sum, &BandGroup::Lower, &opts, e).unwrap()
    });
    assert_eq!(a, b);
}

#[test]
fn field_map() {
    let g = build_helix(&HelixParams::reference(Handedness::Left)).unwrap();
    let c = assemble_with(&g, Execution::Sequential).unwrap();
    let s = Propagator::new(&effective(&c, false))
        .unwrap()
        .propagate_to(&initial_state(g.n_sites(), 0, 0.5).unwrap(), 1.0)
        .unwrap();
    let plane = FieldPlane {
        n_u: 11,
        n_v: 21,
        ..FieldPlane::default_for(&g)
    };
    let [a, b] = BOTH.map(|e| intensity_map(&g, &s, &plane, Spin::Up, e).unwrap());
    assert_eq!(a.values.len(), b.values.len());
    assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
}
