//! Bloch Hamiltonians and band structures of the infinite helix.
//!
//! The unit cell is one full turn: `𝒩` sublattice sites and period `a` along
//! `ẑ`. With `n = μ + d` the site `d` positions away from `μ` (sublattice
//! `ν = n mod 𝒩`, cell `m = ⌊n/𝒩⌋`),
//!
//! ```text
//! H(k)_{μσ,νσ'} = Σ_{|d| ≤ 𝒩 M_cut, d ≠ 0} e^{+i k m a} c_{μσ,νσ'}(d)  -  (i/2) Γ0 δ_{μν} δ_{σσ'}
//! ```
//!
//! where `c = J - iΓ/2` (or `J` alone for the coherent part). Truncating on
//! the site offset `d` rather than on the cell index keeps the sum symmetric
//! under `d → -d`, so the two-fold rotation about `x̂` (inversion combined with
//! spin flip on the helix) stays an exact symmetry of the truncated sum.
//! Quasimomentum enters through the cell index only, so `H(k + 2π/a) = H(k)`.
//!
//! A sharp cutoff rings: the decay rates `Γ_nk` oscillate around their
//! infinite-lattice values by `O(1/M_cut)` and can dip below zero outside the
//! light cone. [`Truncation::Fejer`] weights offset `d` by
//! `1 - |d|/(𝒩 M_cut + 1)` instead; the weights form a positive-definite
//! sequence, so `Γ(k)` stays positive semidefinite and `Γ_nk ≥ 0` exactly.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::geometry::{GeometryError, HelixParams};
use crate::greens::{pair_coupling, PairCoupling, PolarizationBasis, SpinBlock, GAMMA0, K0};
use crate::linalg::{self, CMat, LinalgError};
use crate::C64;

/// Default number of unit cells summed on each side.
pub const DEFAULT_M_CUT: usize = 2000;
/// Default number of points on the Brillouin-zone grid.
pub const DEFAULT_N_K: usize = 401;
/// Eigenvalues closer than this (relative to `max(1, |λ|)`) form a degenerate cluster.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Relative tolerance for `|k| = k0`.
pub const LIGHT_CONE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BlochError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("lattice cutoff must be at least 1")]
    ZeroCutoff,
    #[error("k grid needs at least {min} points, got {got}")]
    GridTooSmall { got: usize, min: usize },
    #[error("k grid must be sorted and finite")]
    UnsortedGrid,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// How the lattice sum is cut off.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truncation {
    /// Every offset `|d| ≤ 𝒩 M_cut` with unit weight.
    #[default]
    Sharp,
    /// Triangular (Cesàro) weights over the same offsets.
    Fejer,
}

impl Truncation {
    fn weight(self, offset: usize, reach: usize) -> f64 {
        match self {
            Truncation::Sharp => 1.0,
            Truncation::Fejer => 1.0 - offset as f64 / (reach + 1) as f64,
        }
    }
}

#[derive(Clone, Debug)]
struct Term {
    nu: usize,
    cell: i64,
    offset: usize,
    coupling: PairCoupling,
}

/// Real-space couplings of one sublattice row, computed once and reused for
/// every `k`.
#[derive(Clone, Debug)]
pub struct LatticeSum {
    params: HelixParams,
    m_cut: usize,
    truncation: Truncation,
    rows: Vec<Vec<Term>>,
}

impl LatticeSum {
    pub fn new(params: &HelixParams, m_cut: usize) -> Result<Self, BlochError> {
        Self::with_execution(params, m_cut, Execution::default())
    }

    pub fn with_execution(params: &HelixParams, m_cut: usize, exec: Execution) -> Result<Self, BlochError> {
        Self::with_truncation(params, m_cut, Truncation::Sharp, exec)
    }

    pub fn with_truncation(
        params: &HelixParams,
        m_cut: usize,
        truncation: Truncation,
        exec: Execution,
    ) -> Result<Self, BlochError> {
        params.validate()?;
        if m_cut == 0 {
            return Err(BlochError::ZeroCutoff);
        }
        let per_turn = params.sites_per_turn as i64;
        let reach = per_turn * m_cut as i64;
        let basis = PolarizationBasis;
        let rows = exec.map(params.sites_per_turn, |mu| {
            let r_mu = params.site_position(mu as i64);
            (-reach..=reach)
                .filter(|&d| d != 0)
                .map(|d| {
                    let n = mu as i64 + d;
                    let coupling = pair_coupling(&r_mu, &params.site_position(n), &basis)
                        .expect("helix sites are distinct");
                    Term {
                        nu: n.rem_euclid(per_turn) as usize,
                        cell: n.div_euclid(per_turn),
                        offset: d.unsigned_abs() as usize,
                        coupling,
                    }
                })
                .collect()
        });
        Ok(LatticeSum {
            params: *params,
            m_cut,
            truncation,
            rows,
        })
    }

    pub fn params(&self) -> &HelixParams {
        &self.params
    }

    pub fn m_cut(&self) -> usize {
        self.m_cut
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn dim(&self) -> usize {
        2 * self.params.sites_per_turn
    }

    /// `H(k)` together with the max-norm difference to the sum truncated at
    /// `M_cut / 2`.
    pub fn hamiltonian(&self, k: f64, hermitian_only: bool) -> BlochHamiltonian {
        let per_turn = self.params.sites_per_turn;
        let dim = self.dim();
        let reach = per_turn * self.m_cut;
        let half_reach = per_turn * (self.m_cut / 2);
        let max_cell = self.m_cut as i64 + 1;
        let phases: Vec<C64> = (-max_cell..=max_cell)
            .map(|m| C64::from_polar(1.0, k * m as f64 * self.params.pitch))
            .collect();
        let mut full = linalg::zeros(dim);
        let mut half = linalg::zeros(dim);
        let block = |c: &PairCoupling| -> SpinBlock {
            if hermitian_only {
                c.j
            } else {
                let h = C64::new(0.0, 0.5);
                [
                    [c.j[0][0] - h * c.gamma[0][0], c.j[0][1] - h * c.gamma[0][1]],
                    [c.j[1][0] - h * c.gamma[1][0], c.j[1][1] - h * c.gamma[1][1]],
                ]
            }
        };
        for (mu, row) in self.rows.iter().enumerate() {
            for term in row {
                let phase = phases[(term.cell + max_cell) as usize];
                let b = block(&term.coupling);
                let w_full = self.truncation.weight(term.offset, reach);
                let w_half = self.truncation.weight(term.offset, half_reach);
                for s in 0..2 {
                    for t in 0..2 {
                        let v = phase * b[s][t];
                        full[(2 * mu + s, 2 * term.nu + t)] += v * w_full;
                        if term.offset <= half_reach {
                            half[(2 * mu + s, 2 * term.nu + t)] += v * w_half;
                        }
                    }
                }
            }
        }
        if !hermitian_only {
            let on_site = C64::new(0.0, -0.5 * GAMMA0);
            for a in 0..dim {
                full[(a, a)] += on_site;
                half[(a, a)] += on_site;
            }
        }
        let mut convergence = 0.0f64;
        for j in 0..dim {
            for i in 0..dim {
                convergence = convergence.max((full[(i, j)] - half[(i, j)]).norm());
            }
        }
        BlochHamiltonian {
            k,
            matrix: full,
            m_cut: self.m_cut,
            hermitian_only,
            convergence,
        }
    }
}

/// `H(k)` over sublattice ⊗ spin (index `2μ + σ`).
#[derive(Clone, Debug)]
pub struct BlochHamiltonian {
    pub k: f64,
    pub matrix: CMat,
    pub m_cut: usize,
    pub hermitian_only: bool,
    /// `max |H_{M_cut}(k) - H_{M_cut/2}(k)|`
    pub convergence: f64,
}

pub fn bloch_hamiltonian(
    params: &HelixParams,
    k: f64,
    m_cut: usize,
    hermitian_only: bool,
) -> Result<BlochHamiltonian, BlochError> {
    Ok(LatticeSum::new(params, m_cut)?.hamiltonian(k, hermitian_only))
}

/// `n` points spanning `[-π/a, π/a]` inclusive; `k_i` and `k_{n-1-i}` are
/// exact negatives, and `k = 0` is on the grid for odd `n`.
pub fn bz_grid(pitch: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let edge = PI / pitch;
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| edge * (2.0 * i as f64 - denom) / denom)
        .collect()
}

/// `n` points `-π/a + 2πi/(na)`, `i < n`: one traversal of the periodic zone.
pub fn periodic_grid(pitch: f64, n: usize) -> Vec<f64> {
    let edge = PI / pitch;
    (0..n).map(|i| -edge + 2.0 * edge * i as f64 / n as f64).collect()
}

/// The two-fold rotation about `x̂` (site `n → -n`, `↑ ↔ ↓`) in the Bloch
/// basis: `H(-k) = W(k) H(k) W(k)†`.
pub fn pbar_operator(params: &HelixParams, k: f64) -> CMat {
    let per_turn = params.sites_per_turn;
    let mut w = linalg::zeros(2 * per_turn);
    for mu in 0..per_turn {
        let image = (per_turn - mu) % per_turn;
        let phase = if mu > 0 {
            C64::from_polar(1.0, -k * params.pitch)
        } else {
            C64::new(1.0, 0.0)
        };
        w[(2 * mu, 2 * image + 1)] = phase;
        w[(2 * mu + 1, 2 * image)] = phase;
    }
    w
}

/// True for `k ≡ 0` or `k ≡ π/a` (mod `2π/a`), where `W(k)` commutes with `H(k)`.
pub fn is_pbar_invariant(pitch: f64, k: f64) -> bool {
    let x = (k * pitch / PI).rem_euclid(1.0);
    x.min(1.0 - x) < 1e-12
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightCone {
    Inside,
    Edge,
    Outside,
}

impl LightCone {
    pub fn classify(k: f64) -> Self {
        let d = k.abs() - K0;
        if d.abs() <= LIGHT_CONE_TOL * K0 {
            LightCone::Edge
        } else if d < 0.0 {
            LightCone::Inside
        } else {
            LightCone::Outside
        }
    }
}

impl fmt::Display for LightCone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LightCone::Inside => "true",
            LightCone::Edge => "edge",
            LightCone::Outside => "false",
        })
    }
}

/// One band at one `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandPoint {
    /// `ε = Re λ`
    pub energy: f64,
    /// `Γ = -2 Im λ`
    pub gamma: f64,
    /// `u† S_z u / u† u`
    pub sz: f64,
    /// `dε/dk` along the continued band.
    pub velocity: f64,
    pub light_cone: LightCone,
}

/// Eigenpairs at one `k`, sorted by energy, unit-norm and phase-fixed.
#[derive(Clone, Debug)]
pub struct BlochModes {
    pub k: f64,
    pub eigenvalues: Vec<C64>,
    /// Right eigenvectors as columns.
    pub vectors: CMat,
    pub convergence: f64,
}

#[derive(Clone, Debug)]
pub struct BandStructure {
    pub params: HelixParams,
    pub m_cut: usize,
    pub truncation: Truncation,
    pub hermitian_only: bool,
    pub k: Vec<f64>,
    /// `bands[i][n]`: band `n` (energy rank) at `k[i]`.
    pub bands: Vec<Vec<BandPoint>>,
    pub modes: Vec<BlochModes>,
    /// `continuation[i][b]`: energy rank at `k[i]` of continued band `b`.
    pub continuation: Vec<Vec<usize>>,
    /// Steps `k[i-1] → k[i]` whose overlap matching was ambiguous and fell back
    /// to energy order.
    pub ambiguous: Vec<bool>,
}

impl BandStructure {
    pub fn n_bands(&self) -> usize {
        2 * self.params.sites_per_turn
    }

    /// Largest truncation estimate over the grid.
    pub fn max_convergence(&self) -> f64 {
        self.modes.iter().map(|m| m.convergence).fold(0.0, f64::max)
    }

    pub fn energies(&self) -> Vec<Vec<f64>> {
        self.bands
            .iter()
            .map(|row| row.iter().map(|b| b.energy).collect())
            .collect()
    }
}

/// `⟨S_z⟩` of a (not necessarily normalized) vector.
pub fn spin_expectation(u: &[C64]) -> f64 {
    let (mut up, mut down) = (0.0, 0.0);
    for (i, x) in u.iter().enumerate() {
        if i % 2 == 0 {
            up += x.norm_sqr();
        } else {
            down += x.norm_sqr();
        }
    }
    (up - down) / (up + down)
}

/// Unit norm with the largest-magnitude component real and positive.
pub fn fix_gauge(u: &mut [C64]) {
    let n = linalg::norm_sqr(u).sqrt();
    let max = u.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let pivot = u
        .iter()
        .position(|x| x.norm() >= max * (1.0 - 1e-10))
        .unwrap_or(0);
    let phase = if u[pivot].norm() > 0.0 {
        u[pivot].conj() / u[pivot].norm()
    } else {
        C64::new(1.0, 0.0)
    };
    for x in u.iter_mut() {
        *x *= phase / n;
    }
}

/// Index ranges of consecutive eigenvalues within the degeneracy tolerance.
pub fn degenerate_clusters(values: &[C64], tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len() || {
            let scale = values[i].norm().max(values[i - 1].norm()).max(1.0);
            (values[i] - values[i - 1]).norm() > tol * scale
        };
        if split {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Rotates a degenerate cluster onto the eigenbasis of the Hermitian operator
/// `op` restricted to it. Eigenvectors of `op` come out in ascending order.
fn resolve_cluster(vectors: &mut [Vec<C64>], op: &CMat) -> Result<(), LinalgError> {
    if vectors.len() < 2 || !linalg::orthonormalize(vectors) {
        return Ok(());
    }
    let m = vectors.len();
    let images: Vec<Vec<C64>> = vectors.iter().map(|v| linalg::matvec(op, v)).collect();
    let proj = CMat::from_fn(m, m, |i, j| {
        let a = linalg::inner(&vectors[i], &images[j]);
        let b = linalg::inner(&vectors[j], &images[i]).conj();
        (a + b) * 0.5
    });
    let (_, rot) = linalg::eigen_hermitian(&proj)?;
    let old = vectors.to_vec();
    for (c, v) in vectors.iter_mut().enumerate() {
        for (i, x) in v.iter_mut().enumerate() {
            *x = (0..m).map(|r| old[r][i] * rot[(r, c)]).sum();
        }
    }
    Ok(())
}

fn sz_operator(dim: usize) -> CMat {
    CMat::from_fn(dim, dim, |i, j| {
        if i != j {
            C64::new(0.0, 0.0)
        } else if i % 2 == 0 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(-1.0, 0.0)
        }
    })
}

/// Eigen-decomposes `H(k)`, sorts by energy and fixes the basis inside
/// degenerate clusters: the `W` eigenbasis at `k = 0, ±π/a`, the `S_z`
/// eigenbasis elsewhere.
pub fn diagonalize(h: &BlochHamiltonian, params: &HelixParams) -> Result<BlochModes, LinalgError> {
    let dim = h.matrix.nrows();
    let (values, vecs) = if h.hermitian_only {
        let (v, u) = linalg::eigen_hermitian(&h.matrix)?;
        (v.into_iter().map(|e| C64::new(e, 0.0)).collect::<Vec<_>>(), u)
    } else {
        linalg::eigen_general(&h.matrix)?
    };
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .re
            .total_cmp(&values[b].re)
            .then(values[b].im.total_cmp(&values[a].im))
    });
    let values: Vec<C64> = order.iter().map(|&i| values[i]).collect();
    let mut columns: Vec<Vec<C64>> = order.iter().map(|&i| linalg::column(&vecs, i)).collect();

    let op = if is_pbar_invariant(params.pitch, h.k) {
        pbar_operator(params, h.k)
    } else {
        sz_operator(dim)
    };
    for range in degenerate_clusters(&values, DEGENERACY_TOL) {
        resolve_cluster(&mut columns[range], &op)?;
    }
    for c in columns.iter_mut() {
        fix_gauge(c);
    }
    Ok(BlochModes {
        k: h.k,
        eigenvalues: values,
        vectors: CMat::from_fn(dim, dim, |i, j| columns[j][i]),
        convergence: h.convergence,
    })
}

/// Matches bands between neighbouring `k` by maximal eigenvector overlap.
/// Returns `perm[b]` (rank at the new `k` of the band with rank `b` before)
/// and whether any match was ambiguous.
fn match_bands(prev: &BlochModes, next: &BlochModes) -> (Vec<usize>, bool) {
    let dim = prev.eigenvalues.len();
    let overlap = CMat::from_fn(dim, dim, |a, b| {
        C64::new(
            linalg::inner(&linalg::column(&prev.vectors, a), &linalg::column(&next.vectors, b)).norm(),
            0.0,
        )
    });
    let mut pairs: Vec<(f64, usize, usize)> = (0..dim)
        .flat_map(|a| (0..dim).map(move |b| (a, b)))
        .map(|(a, b)| (overlap[(a, b)].re, a, b))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut perm = vec![usize::MAX; dim];
    let mut taken = vec![false; dim];
    for (_, a, b) in pairs {
        if perm[a] == usize::MAX && !taken[b] {
            perm[a] = b;
            taken[b] = true;
        }
    }
    let mut ambiguous = false;
    for a in 0..dim {
        let best = overlap[(a, perm[a])].re;
        let runner_up = (0..dim)
            .filter(|&b| b != perm[a])
            .map(|b| overlap[(a, b)].re)
            .fold(0.0, f64::max);
        if best < 0.5 || best - runner_up < 0.1 {
            ambiguous = true;
        }
    }
    // inside degenerate clusters the overlap carries no information
    for range in degenerate_clusters(&next.eigenvalues, DEGENERACY_TOL) {
        if range.len() < 2 {
            continue;
        }
        let mut sources: Vec<usize> = (0..dim).filter(|&a| range.contains(&perm[a])).collect();
        sources.sort_unstable();
        for (slot, a) in range.clone().zip(sources) {
            if perm[a] != slot {
                ambiguous = true;
            }
            perm[a] = slot;
        }
    }
    (perm, ambiguous)
}

/// Bands over a sorted `k` grid. `k` points are diagonalized in parallel;
/// continuation and velocities are a sequential pass.
pub fn band_structure(
    sum: &LatticeSum,
    k_grid: &[f64],
    hermitian_only: bool,
    exec: Execution,
) -> Result<BandStructure, BlochError> {
    if k_grid.len() < 2 {
        return Err(BlochError::GridTooSmall {
            got: k_grid.len(),
            min: 2,
        });
    }
    if k_grid.iter().any(|k| !k.is_finite()) || k_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BlochError::UnsortedGrid);
    }
    let params = *sum.params();
    let modes = exec.try_map(k_grid.len(), |i| {
        diagonalize(&sum.hamiltonian(k_grid[i], hermitian_only), &params)
    })?;
    let dim = sum.dim();

    let mut continuation = vec![(0..dim).collect::<Vec<usize>>()];
    let mut ambiguous = vec![false];
    for i in 1..modes.len() {
        let (perm, amb) = match_bands(&modes[i - 1], &modes[i]);
        let prev = &continuation[i - 1];
        continuation.push((0..dim).map(|b| perm[prev[b]]).collect());
        ambiguous.push(amb);
    }

    let n = k_grid.len();
    let mut bands: Vec<Vec<BandPoint>> = modes
        .iter()
        .map(|m| {
            (0..dim)
                .map(|b| BandPoint {
                    energy: m.eigenvalues[b].re,
                    gamma: -2.0 * m.eigenvalues[b].im,
                    sz: spin_expectation(&linalg::column(&m.vectors, b)),
                    velocity: 0.0,
                    light_cone: LightCone::classify(m.k),
                })
                .collect()
        })
        .collect();
    for b in 0..dim {
        for i in 0..n {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let e_lo = modes[lo].eigenvalues[continuation[lo][b]].re;
            let e_hi = modes[hi].eigenvalues[continuation[hi][b]].re;
            bands[i][continuation[i][b]].velocity = (e_hi - e_lo) / (k_grid[hi] - k_grid[lo]);
        }
    }
    Ok(BandStructure {
        params,
        m_cut: sum.m_cut(),
        truncation: sum.truncation(),
        hermitian_only,
        k: k_grid.to_vec(),
        bands,
        modes,
        continuation,
        ambiguous,
    })
}

/// Largest violations of the `k → -k` band constraints.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymmetryReport {
    /// `max |ε_n(-k) - ε_n(k)|`
    pub energy: f64,
    /// `max |Γ_n(-k) - Γ_n(k)|`
    pub gamma: f64,
    /// `max |⟨S_z⟩_n(-k) + ⟨S_z⟩_n(k)|`
    pub sz: f64,
    /// `max |⟨S_z⟩|` at `k = 0, ±π/a`.
    pub sz_invariant: f64,
    /// Number of `(k, -k)` pairs found on the grid.
    pub pairs: usize,
}

impl SymmetryReport {
    pub fn max(&self) -> f64 {
        self.energy.max(self.gamma).max(self.sz).max(self.sz_invariant)
    }
}

/// Checks the anti-inversion constraints on every `(k, -k)` pair of the grid.
/// Inside a degenerate cluster the band labels are arbitrary, so values are
/// compared as sorted multisets.
pub fn symmetry_report(bs: &BandStructure) -> SymmetryReport {
    let mut r = SymmetryReport::default();
    let n = bs.k.len();
    let scale = bs.k.iter().fold(0.0f64, |m, k| m.max(k.abs())).max(1.0);
    for i in 0..n {
        let Some(j) = (0..n).find(|&j| (bs.k[j] + bs.k[i]).abs() <= 1e-12 * scale) else {
            continue;
        };
        if j < i {
            continue;
        }
        r.pairs += 1;
        let (a, b) = (&bs.bands[i], &bs.bands[j]);
        for range in degenerate_clusters(&bs.modes[i].eigenvalues, DEGENERACY_TOL) {
            let collect = |row: &Vec<BandPoint>, f: &dyn Fn(&BandPoint) -> f64| {
                let mut v: Vec<f64> = range.clone().map(|x| f(&row[x])).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let pairs = |x: Vec<f64>, y: Vec<f64>| {
                x.iter()
                    .zip(&y)
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0, f64::max)
            };
            r.energy = r.energy.max(pairs(collect(a, &|p| p.energy), collect(b, &|p| p.energy)));
            r.gamma = r.gamma.max(pairs(collect(a, &|p| p.gamma), collect(b, &|p| p.gamma)));
            r.sz = r.sz.max(pairs(collect(a, &|p| p.sz), collect(b, &|p| -p.sz)));
        }
    }
    for (i, k) in bs.k.iter().enumerate() {
        if is_pbar_invariant(bs.params.pitch, *k) {
            for p in &bs.bands[i] {
                r.sz_invariant = r.sz_invariant.max(p.sz.abs());
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Handedness;

    fn params(per_turn: usize) -> HelixParams {
        HelixParams {
            sites_per_turn: per_turn,
            ..HelixParams::reference(Handedness::Left)
        }
    }

    #[test]
    fn grid_is_symmetric() {
        let g = bz_grid(0.175, 401);
        assert_eq!(g[200], 0.0);
        for i in 0..401 {
            assert_eq!(g[i], -g[400 - i]);
        }
        assert!((g[400] - PI / 0.175).abs() < 1e-12);
        let p = periodic_grid(0.175, 4);
        assert!((p[0] + PI / 0.175).abs() < 1e-12);
        assert!((p[2]).abs() < 1e-12);
    }

    #[test]
    fn coherent_part_is_hermitian() {
        let sum = LatticeSum::new(&params(3), 50).unwrap();
        for k in [0.3, -7.0, 15.0] {
            let h = sum.hamiltonian(k, true);
            assert!(linalg::hermiticity_error(&h.matrix) < 1e-10);
        }
    }

    #[test]
    fn single_site_cell_is_spin_diagonal() {
        let sum = LatticeSum::new(&params(1), 100).unwrap();
        let h = sum.hamiltonian(1.234, false);
        assert_eq!(h.matrix.nrows(), 2);
        assert!(h.matrix[(0, 1)].norm() < 1e-12);
        assert!(h.matrix[(1, 0)].norm() < 1e-12);
        assert!((h.matrix[(0, 0)] - h.matrix[(1, 1)]).norm() < 1e-12);
    }

    #[test]
    fn anti_inversion_conjugation() {
        let p = params(3);
        let sum = LatticeSum::new(&p, 100).unwrap();
        for k in [0.0, 1.1, -4.0, 12.5, PI / p.pitch] {
            for herm in [true, false] {
                let hk = sum.hamiltonian(k, herm).matrix;
                let hmk = sum.hamiltonian(-k, herm).matrix;
                let w = pbar_operator(&p, k);
                let conj = &w * &hk * w.adjoint();
                let mut err = 0.0f64;
                for i in 0..6 {
                    for j in 0..6 {
                        err = err.max((conj[(i, j)] - hmk[(i, j)]).norm());
                    }
                }
                assert!(err < 1e-10, "k={k} err={err}");
            }
        }
    }

    #[test]
    fn periodic_in_reciprocal_lattice_vector() {
        let p = params(3);
        let sum = LatticeSum::new(&p, 50).unwrap();
        let a = sum.hamiltonian(-PI / p.pitch, false).matrix;
        let b = sum.hamiltonian(PI / p.pitch, false).matrix;
        assert!(linalg::max_abs(&(a - b)) < 1e-10);
    }

    #[test]
    fn convergence_estimate_shrinks() {
        let p = params(3);
        let k = 25.0;
        let coarse = LatticeSum::new(&p, 20).unwrap().hamiltonian(k, false).convergence;
        let fine = LatticeSum::new(&p, 400).unwrap().hamiltonian(k, false).convergence;
        assert!(fine < coarse);
    }

    #[test]
    fn light_cone_classification() {
        assert_eq!(LightCone::classify(0.0), LightCone::Inside);
        assert_eq!(LightCone::classify(-K0), LightCone::Edge);
        assert_eq!(LightCone::classify(K0 * 1.01), LightCone::Outside);
        // 0.35 π/a = k0 for the reference pitch
        let g = bz_grid(0.175, 401);
        assert_eq!(LightCone::classify(g[200 + 70]), LightCone::Edge);
    }

    #[test]
    fn gauge_fix_is_canonical() {
        let mut u = vec![C64::new(0.0, 2.0), C64::new(1.0, 0.0)];
        fix_gauge(&mut u);
        assert!((u[0] - C64::new(2.0 / 5f64.sqrt(), 0.0)).norm() < 1e-15);
        assert!((linalg::norm_sqr(&u) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn band_structure_small() {
        let p = params(3);
        let sum = LatticeSum::new(&p, 100).unwrap();
        let bs = band_structure(&sum, &bz_grid(p.pitch, 41), false, Execution::default()).unwrap();
        assert_eq!(bs.bands.len(), 41);
        assert!(bs.bands.iter().all(|row| row.len() == 6));
        let r = symmetry_report(&bs);
        assert_eq!(r.pairs, 21);
        assert!(r.max() < 1e-8, "{r:?}");
        for row in &bs.bands {
            for b in row {
                assert!(b.sz.abs() <= 1.0 + 1e-12);
            }
        }
        for row in &bs.continuation {
            let mut sorted = row.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        }
    }

    fn min_gamma(sum: &LatticeSum) -> f64 {
        let grid = bz_grid(sum.params().pitch, 81);
        let bs = band_structure(sum, &grid, false, Execution::default()).unwrap();
        bs.bands.iter().flatten().map(|b| b.gamma).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn sharp_cutoff_rings_below_zero() {
        let p = params(3);
        let coarse = min_gamma(&LatticeSum::new(&p, 50).unwrap());
        let fine = min_gamma(&LatticeSum::new(&p, 800).unwrap());
        assert!(coarse < 0.0);
        assert!(fine.abs() < coarse.abs());
    }

    #[test]
    fn fejer_cutoff_keeps_decay_rates_nonnegative() {
        for n in [1, 2, 3, 4] {
            let sum = LatticeSum::with_truncation(&params(n), 50, Truncation::Fejer, Execution::default()).unwrap();
            assert!(min_gamma(&sum) > -1e-8, "N={n}");
        }
    }

    #[test]
    fn unsorted_grid_rejected() {
        let sum = LatticeSum::new(&params(1), 10).unwrap();
        assert!(matches!(
            band_structure(&sum, &[1.0, 0.0], true, Execution::Sequential),
            Err(BlochError::UnsortedGrid)
        ));
        assert!(matches!(LatticeSum::new(&params(1), 0), Err(BlochError::ZeroCutoff)));
    }
}
