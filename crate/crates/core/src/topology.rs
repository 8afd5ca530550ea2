//! Zak phases from discrete Wilson loops, and band-gap detection.
//!
//! For a band group with Bloch frame `U(k)` (columns = the group's
//! eigenvectors) on a closed grid `k_0 .. k_{n-1}`, the Zak phase is
//! `φ = -arg Π_i det(U(k_i)† U(k_{i+1}))` with `k_n ≡ k_0`. Because `H(k)`
//! depends on `k` only through the cell index, `U(k + 2π/a) = U(k)` and the
//! loop closes without a boundary phase.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bloch::{self, BlochError, LatticeSum};
use crate::exec::Execution;
use crate::geometry::HelixParams;
use crate::linalg::{self, CMat, LinalgError};
use crate::C64;

/// Windows narrower than this do not count as a gap.
pub const GAP_THRESHOLD: f64 = 1e-3;
/// Overlap determinants below this mark the band group as not isolated.
pub const MIN_OVERLAP_DET: f64 = 1e-6;
pub const DEFAULT_ZAK_N_K: usize = 400;
pub const MIN_ZAK_N_K: usize = 50;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error(transparent)]
    Bloch(#[from] BlochError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("Wilson loop needs at least {min} k points, got {got}")]
    TooFewPoints { got: usize, min: usize },
    #[error("band index {0} out of range")]
    BandOutOfRange(usize),
    #[error("empty band group")]
    EmptyGroup,
}

/// An energy window free of bands at every `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    /// Bands `0..split` lie below the window.
    pub split: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Gap {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Largest full gap of energy-ranked bands `energies[k][n]`, if wider than
/// [`GAP_THRESHOLD`].
pub fn detect_gap_in(energies: &[Vec<f64>]) -> Option<Gap> {
    let n_bands = energies.first()?.len();
    (1..n_bands)
        .map(|s| Gap {
            split: s,
            lower: energies.iter().map(|row| row[s - 1]).fold(f64::NEG_INFINITY, f64::max),
            upper: energies.iter().map(|row| row[s]).fold(f64::INFINITY, f64::min),
        })
        .filter(|g| g.width() >= GAP_THRESHOLD)
        .max_by(|a, b| a.width().total_cmp(&b.width()))
}

pub fn detect_gap(bands: &bloch::BandStructure) -> Option<Gap> {
    detect_gap_in(&bands.energies())
}

/// Width of the detected gap, `0` if gapless.
pub fn gap_width(gap: Option<Gap>) -> f64 {
    gap.map_or(0.0, |g| g.width())
}

/// Smallest `s` such that bands `0..s` are separated from band `s` at every
/// `k` (a direct gap), or `n_bands` if there is none.
fn lowest_isolated_split(energies: &[Vec<f64>]) -> usize {
    let n_bands = energies.first().map_or(0, |r| r.len());
    (1..n_bands)
        .find(|&s| energies.iter().all(|row| row[s] - row[s - 1] >= GAP_THRESHOLD))
        .unwrap_or(n_bands)
}

fn highest_isolated_split(energies: &[Vec<f64>]) -> usize {
    let n_bands = energies.first().map_or(0, |r| r.len());
    (1..n_bands)
        .rev()
        .find(|&s| energies.iter().all(|row| row[s] - row[s - 1] >= GAP_THRESHOLD))
        .unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandGroup {
    /// Bands below the detected gap; without a full gap, the lowest cluster
    /// that is separated from the rest at every `k`.
    Lower,
    /// Bands above the detected gap (or the highest isolated cluster).
    Upper,
    All,
    Explicit(Vec<usize>),
}

impl BandGroup {
    pub fn label(&self) -> String {
        match self {
            BandGroup::Lower => "lower".into(),
            BandGroup::Upper => "upper".into(),
            BandGroup::All => "all".into(),
            BandGroup::Explicit(v) => format!("{v:?}"),
        }
    }

    /// Energy-rank indices of the group.
    pub fn resolve(&self, energies: &[Vec<f64>]) -> Vec<usize> {
        let n_bands = energies.first().map_or(0, |r| r.len());
        let gap = detect_gap_in(energies);
        match self {
            BandGroup::Lower => {
                let s = gap.map_or_else(|| lowest_isolated_split(energies), |g| g.split);
                (0..s).collect()
            }
            BandGroup::Upper => {
                let s = gap.map_or_else(|| highest_isolated_split(energies), |g| g.split);
                (s..n_bands).collect()
            }
            BandGroup::All => (0..n_bands).collect(),
            BandGroup::Explicit(v) => v.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZakOptions {
    pub n_k: usize,
    pub m_cut: usize,
    /// Coherent Hamiltonian only; otherwise a biorthogonal loop of `H_eff`.
    pub hermitian_only: bool,
}

impl Default for ZakOptions {
    fn default() -> Self {
        ZakOptions {
            n_k: DEFAULT_ZAK_N_K,
            m_cut: bloch::DEFAULT_M_CUT,
            hermitian_only: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZakResult {
    pub n_sites_per_turn: usize,
    pub band_group: String,
    pub bands: Vec<usize>,
    pub n_k: usize,
    /// In `(-π, π]`.
    pub zak_phase: f64,
    /// Distance of `φ` from the nearest of `{0, π}`.
    pub residual: f64,
    pub gap_width: f64,
    /// `min_i |det M^{(i)}|`
    pub min_overlap_det: f64,
    /// False when the group is not isolated (a near-singular overlap).
    pub well_defined: bool,
    pub hermitian_only: bool,
    /// Largest lattice-sum truncation estimate over the loop.
    pub convergence: f64,
}

/// The on-disk JSON record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZakRecord {
    pub n_sites_per_turn: usize,
    pub band_group: String,
    pub n_k: usize,
    pub zak_phase: f64,
    pub residual: f64,
    pub gap_width: f64,
}

impl ZakResult {
    pub fn record(&self) -> ZakRecord {
        ZakRecord {
            n_sites_per_turn: self.n_sites_per_turn,
            band_group: self.band_group.clone(),
            n_k: self.n_k,
            zak_phase: self.zak_phase,
            residual: self.residual,
            gap_width: self.gap_width,
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.zak_phase.abs() < PI / 2.0
    }
}

/// Wraps into `(-π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// `|φ - nearest of {0, π}|`
pub fn quantization_residual(phi: f64) -> f64 {
    let a = wrap_phase(phi).abs();
    a.min(PI - a)
}

/// Phase and smallest `|det|` of the closed loop of overlaps
/// `left(k_i) · right(k_{i+1})` restricted to `bands`.
fn loop_phase(left: &[CMat], right: &[CMat], bands: &[usize]) -> Result<(f64, f64), TopologyError> {
    let n = right.len();
    if bands.is_empty() {
        return Err(TopologyError::EmptyGroup);
    }
    let dim = right.first().map_or(0, |f| f.ncols());
    if let Some(&b) = bands.iter().find(|&&b| b >= dim) {
        return Err(TopologyError::BandOutOfRange(b));
    }
    let m = bands.len();
    let mut phase = 0.0;
    let mut min_det = f64::INFINITY;
    for i in 0..n {
        let (l, r) = (&left[i], &right[(i + 1) % n]);
        let overlap = CMat::from_fn(m, m, |a, b| {
            (0..l.ncols())
                .map(|x| l[(bands[a], x)] * r[(x, bands[b])])
                .sum::<C64>()
        });
        let det = linalg::determinant(&overlap);
        min_det = min_det.min(det.norm());
        phase -= det.arg();
    }
    Ok((wrap_phase(phase), min_det))
}

/// Zak phase of orthonormal frames `frames[i]` (eigenvectors as columns) over
/// a closed `k` loop. Gauge invariant under any per-`k` unitary rotation
/// inside the group.
pub fn wilson_loop_phase(frames: &[CMat], bands: &[usize]) -> Result<f64, TopologyError> {
    if frames.len() < 2 {
        return Err(TopologyError::TooFewPoints {
            got: frames.len(),
            min: 2,
        });
    }
    let left: Vec<CMat> = frames.iter().map(|f| f.adjoint().to_owned()).collect();
    Ok(loop_phase(&left, frames, bands)?.0)
}

/// Eigen-frames of `H(k)` on the periodic grid, sorted by energy.
/// Returns `(energies, left, right, convergence)`; for the coherent problem
/// the left frame is the adjoint of the right one, otherwise it is the
/// inverse of the right eigenvector matrix.
type Frames = (Vec<Vec<f64>>, Vec<CMat>, Vec<CMat>, f64);

fn frames(sum: &LatticeSum, n_k: usize, hermitian_only: bool, exec: Execution) -> Result<Frames, TopologyError> {
    let grid = bloch::periodic_grid(sum.params().pitch, n_k);
    let per_k = exec.try_map(n_k, |i| -> Result<_, LinalgError> {
        let h = sum.hamiltonian(grid[i], hermitian_only);
        if hermitian_only {
            let (e, u) = linalg::eigen_hermitian(&h.matrix)?;
            let left = u.adjoint().to_owned();
            Ok((e, left, u, h.convergence))
        } else {
            let (vals, vecs) = linalg::eigen_general(&h.matrix)?;
            let dim = vals.len();
            let mut order: Vec<usize> = (0..dim).collect();
            order.sort_by(|&a, &b| vals[a].re.total_cmp(&vals[b].re));
            let right = CMat::from_fn(dim, dim, |i, j| vecs[(i, order[j])]);
            let left = linalg::inverse(&right);
            Ok((order.iter().map(|&i| vals[i].re).collect(), left, right, h.convergence))
        }
    })?;
    let mut out: Frames = (Vec::new(), Vec::new(), Vec::new(), 0.0);
    for (e, l, r, c) in per_k {
        out.0.push(e);
        out.1.push(l);
        out.2.push(r);
        out.3 = out.3.max(c);
    }
    Ok(out)
}

pub fn zak_phase_with(
    sum: &LatticeSum,
    group: &BandGroup,
    opts: &ZakOptions,
    exec: Execution,
) -> Result<ZakResult, TopologyError> {
    if opts.n_k < MIN_ZAK_N_K {
        return Err(TopologyError::TooFewPoints {
            got: opts.n_k,
            min: MIN_ZAK_N_K,
        });
    }
    let (energies, left, right, convergence) = frames(sum, opts.n_k, opts.hermitian_only, exec)?;
    let bands = group.resolve(&energies);
    let (phase, min_det) = loop_phase(&left, &right, &bands)?;
    Ok(ZakResult {
        n_sites_per_turn: sum.params().sites_per_turn,
        band_group: group.label(),
        bands,
        n_k: opts.n_k,
        zak_phase: phase,
        residual: quantization_residual(phase),
        gap_width: gap_width(detect_gap_in(&energies)),
        min_overlap_det: min_det,
        well_defined: min_det >= MIN_OVERLAP_DET,
        hermitian_only: opts.hermitian_only,
        convergence,
    })
}

pub fn zak_phase(params: &HelixParams, group: &BandGroup, opts: &ZakOptions) -> Result<ZakResult, TopologyError> {
    let sum = LatticeSum::new(params, opts.m_cut)?;
    zak_phase_with(&sum, group, opts, Execution::default())
}

/// Orthonormal coherent Bloch frames on the periodic grid, for gauge tests.
pub fn coherent_frames(sum: &LatticeSum, n_k: usize, exec: Execution) -> Result<Vec<CMat>, TopologyError> {
    Ok(frames(sum, n_k, true, exec)?.2)
}
