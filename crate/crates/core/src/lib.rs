//! Simulation engine for chiral arrays of dipole-coupled V-type emitters.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`]: emitter positions (helices or arbitrary point sets) and the
//!   rigid symmetry operations used by the invariant checks.
//! * [`greens`]: the free-space dyadic Green's tensor and its contraction with
//!   the circular polarization basis into pair couplings.
//! * [`hamiltonian`]: the `2N x 2N` coherent and effective non-Hermitian
//!   Hamiltonians over the site-major `(site, spin)` basis.
//! * [`dynamics`]: single-excitation no-jump evolution and transport observables.
//! * [`bloch`]: lattice-summed Bloch Hamiltonians and band structures for
//!   infinite helices.
//! * [`topology`]: Wilson-loop Zak phases and band-gap detection.
//! * [`field`]: polarization-resolved emitted field intensities.
//! * [`checks`]: a runnable invariant suite used by the `check` mode of the CLI.
//!
//! Units: `λ0 = 1`, `Γ0 = 1`, `ħ = 1`. Energies and rates are in `Γ0`, times in
//! `1/Γ0`, lengths in `λ0`.

pub mod bloch;
pub mod checks;
pub mod dynamics;
pub mod exec;
pub mod field;
pub mod geometry;
pub mod greens;
pub mod hamiltonian;
pub mod linalg;
pub mod ode;
pub mod topology;

pub use num_complex::Complex64 as C64;

pub use exec::Execution;
pub use geometry::{EmitterGeometry, Handedness, HelixParams};
pub use greens::Spin;

/// Engine version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
