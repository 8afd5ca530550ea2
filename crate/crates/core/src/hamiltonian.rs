//! Coupling matrices and effective Hamiltonians in the single-excitation
//! manifold.
//!
//! Basis ordering is site-major: index `2·site + spin`, with `↑ = 0`, `↓ = 1`.
//! The `ω0` diagonal is dropped (rotating frame at resonance).

use thiserror::Error;

use crate::exec::Execution;
use crate::geometry::{EmitterGeometry, GeometryError};
use crate::greens::{pair_coupling, PairCoupling, PolarizationBasis, Spin, GAMMA0};
use crate::linalg::{self, CMat, LinalgError};
use crate::C64;

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Basis index of `(site, spin)`.
pub fn basis_index(site: usize, spin: Spin) -> usize {
    2 * site + spin.index()
}

/// `J` and `Γ` over the `2N`-dimensional site ⊗ spin space.
#[derive(Clone, Debug)]
pub struct CouplingTensor {
    pub j: CMat,
    pub gamma: CMat,
    pub n_sites: usize,
}

pub fn assemble(geom: &EmitterGeometry) -> Result<CouplingTensor, HamiltonianError> {
    assemble_with(geom, Execution::default())
}

pub fn assemble_with(geom: &EmitterGeometry, exec: Execution) -> Result<CouplingTensor, HamiltonianError> {
    geom.validate()?;
    let n = geom.n_sites();
    let basis = PolarizationBasis;
    let rows: Vec<Vec<PairCoupling>> = exec.map(n, |i| {
        (0..n)
            .map(|j| {
                if i == j {
                    PairCoupling::on_site()
                } else {
                    // validate() excludes coincident sites
                    pair_coupling(&geom.positions[i], &geom.positions[j], &basis)
                        .expect("distinct sites")
                }
            })
            .collect()
    });
    let mut j_mat = linalg::zeros(2 * n);
    let mut g_mat = linalg::zeros(2 * n);
    for (i, row) in rows.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            for s in Spin::BOTH {
                for t in Spin::BOTH {
                    let (a, b) = (basis_index(i, s), basis_index(j, t));
                    j_mat[(a, b)] = c.j[s.index()][t.index()];
                    g_mat[(a, b)] = c.gamma[s.index()][t.index()];
                }
            }
        }
    }
    Ok(CouplingTensor {
        j: j_mat,
        gamma: g_mat,
        n_sites: n,
    })
}

impl CouplingTensor {
    pub fn dim(&self) -> usize {
        2 * self.n_sites
    }

    /// Largest entry of `J - J†` and `Γ - Γ†`.
    pub fn hermiticity_error(&self) -> f64 {
        linalg::hermiticity_error(&self.j).max(linalg::hermiticity_error(&self.gamma))
    }

    /// Smallest eigenvalue of `Γ`; non-negative (to rounding) for a physical
    /// decay matrix.
    pub fn gamma_min_eigenvalue(&self) -> Result<f64, LinalgError> {
        let v = linalg::eigenvalues_hermitian(&self.gamma)?;
        Ok(v.first().copied().unwrap_or(0.0))
    }

    /// `min eig(Γ) >= -1e-10 ‖Γ‖`
    pub fn gamma_is_psd(&self) -> Result<bool, LinalgError> {
        let scale = linalg::max_abs(&self.gamma) * self.dim() as f64;
        Ok(self.gamma_min_eigenvalue()? >= -1e-10 * scale.max(GAMMA0))
    }

    /// `Tr Γ`
    pub fn gamma_trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.gamma[(i, i)].re).sum()
    }
}

/// `H_eff = J - iΓ/2`, or `J` alone for Hermitian-only evolution.
#[derive(Clone, Debug)]
pub struct EffectiveHamiltonian {
    pub matrix: CMat,
    pub hermitian_only: bool,
}

pub fn effective(coupling: &CouplingTensor, hermitian_only: bool) -> EffectiveHamiltonian {
    let matrix = if hermitian_only {
        coupling.j.clone()
    } else {
        let half_i = C64::new(0.0, 0.5);
        CMat::from_fn(coupling.dim(), coupling.dim(), |a, b| {
            coupling.j[(a, b)] - half_i * coupling.gamma[(a, b)]
        })
    };
    EffectiveHamiltonian {
        matrix,
        hermitian_only,
    }
}

impl EffectiveHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigenvalues(&self) -> Result<Vec<C64>, LinalgError> {
        if self.hermitian_only {
            Ok(linalg::eigenvalues_hermitian(&self.matrix)?
                .into_iter()
                .map(|e| C64::new(e, 0.0))
                .collect())
        } else {
            linalg::eigenvalues_general(&self.matrix)
        }
    }

    /// `(H - H†)/(2i)`, the anti-Hermitian part divided by `i`.
    pub fn anti_hermitian_part(&self) -> CMat {
        let n = self.dim();
        let two_i = C64::new(0.0, 2.0);
        CMat::from_fn(n, n, |a, b| (self.matrix[(a, b)] - self.matrix[(b, a)].conj()) / two_i)
    }
}

/// Row-major `(row, col, re, im)` entries for the matrix dump files.
pub fn matrix_entries(m: &CMat) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
    (0..m.nrows()).flat_map(move |r| (0..m.ncols()).map(move |c| (r, c, m[(r, c)].re, m[(r, c)].im)))
}

/// Eigenvalues sorted by real part, then imaginary part.
pub fn sorted_spectrum(mut values: Vec<C64>) -> Vec<C64> {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    values
}
