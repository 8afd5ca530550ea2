//! Free-space dyadic Green's tensor and dipole-dipole pair couplings.
//!
//! ```text
//! G(r) = e^{i k r}/(4π r) [ (1 + i/(kr) - 1/(kr)²) 𝟙 - (1 + 3i/(kr) - 3/(kr)²) r̂⊗r̂ ]
//! J^{σσ'} - (i/2) Γ^{σσ'} = -(3/2) λ0 Γ0 ε̂_σ† · G(r_i - r_j) · ε̂_σ'
//! ```
//!
//! `G` is split as `G = G_R + i G_I` with real symmetric parts; `J` contracts
//! `G_R` and `Γ` contracts `G_I`, so both `2N x 2N` matrices are Hermitian.
//! The imaginary part is evaluated through spherical Bessel functions, which
//! stays accurate down to `kr → 0` where it tends to `k/(6π) 𝟙`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{norm, sub, Vec3};
use crate::C64;

/// `λ0`
pub const WAVELENGTH: f64 = 1.0;
/// `Γ0`
pub const GAMMA0: f64 = 1.0;
/// `k0 = 2π/λ0`
pub const K0: f64 = TAU / WAVELENGTH;

pub type Tensor3 = [[C64; 3]; 3];
pub type SpinBlock = [[C64; 2]; 2];

#[derive(Debug, Error, PartialEq)]
pub enum GreensError {
    #[error("Green's tensor evaluated at zero separation")]
    ZeroSeparation,
}

/// Circular polarization / pseudospin label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Up, Spin::Down];

    /// Position inside a site's spin pair (`↑ = 0`, `↓ = 1`).
    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }

    /// `+1` for `↑`, `-1` for `↓`.
    pub fn sign(self) -> f64 {
        match self {
            Spin::Up => 1.0,
            Spin::Down => -1.0,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

/// Unit vectors `ε̂_↑ = (x̂ + iŷ)/√2`, `ε̂_↓ = (x̂ - iŷ)/√2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PolarizationBasis;

impl PolarizationBasis {
    pub fn vector(&self, spin: Spin) -> [C64; 3] {
        let s = spin.sign();
        [
            C64::new(FRAC_1_SQRT_2, 0.0),
            C64::new(0.0, s * FRAC_1_SQRT_2),
            C64::new(0.0, 0.0),
        ]
    }

    /// `ε̂_σ† · M · ε̂_σ'` for a real matrix `M`, in closed form
    /// `½ [M_xx + i t M_xy - i s M_yx + s t M_yy]` with `s, t = ±1`.
    pub fn contract_real(&self, m: &[[f64; 3]; 3], left: Spin, right: Spin) -> C64 {
        let s = left.sign();
        let t = right.sign();
        C64::new(
            0.5 * (m[0][0] + s * t * m[1][1]),
            0.5 * (t * m[0][1] - s * m[1][0]),
        )
    }

    /// `M · ε̂_σ` for a complex tensor.
    pub fn apply(&self, m: &Tensor3, spin: Spin) -> [C64; 3] {
        let e = self.vector(spin);
        let mut out = [C64::new(0.0, 0.0); 3];
        for (a, row) in m.iter().enumerate() {
            out[a] = row[0] * e[0] + row[1] * e[1];
        }
        out
    }
}

/// Spherical Bessel `j0(x) = sin x / x`.
fn bessel_j0(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `j1(x)/x = (sin x/x - cos x)/x²`, with the Taylor series below `x = 1`
/// where the closed form cancels.
fn bessel_j1_over_x(x: f64) -> f64 {
    if x.abs() < 1.0 {
        // Σ_m (-1)^m 2(m+1) x^{2m} / (2m+3)!
        let x2 = x * x;
        let mut term = 1.0 / 3.0;
        let mut sum = term;
        for m in 1..20 {
            let mf = m as f64;
            term *= -x2 * (mf + 1.0) / (mf * (2.0 * mf + 2.0) * (2.0 * mf + 3.0));
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (x.sin() / x - x.cos()) / (x * x)
    }
}

/// Real and imaginary parts of the Green's tensor, each a real symmetric matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenParts {
    pub re: [[f64; 3]; 3],
    pub im: [[f64; 3]; 3],
}

impl GreenParts {
    pub fn to_complex(&self) -> Tensor3 {
        std::array::from_fn(|a| std::array::from_fn(|b| C64::new(self.re[a][b], self.im[a][b])))
    }
}

pub fn green_parts(r: &Vec3, k0: f64) -> Result<GreenParts, GreensError> {
    let d = norm(r);
    if d == 0.0 {
        return Err(GreensError::ZeroSeparation);
    }
    let x = k0 * d;
    let (sin, cos) = x.sin_cos();
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Re[e^{ix}(1 + i/x - 1/x²)] and Re[e^{ix}(1 + 3i/x - 3/x²)]
    let re_a = cos - sin * inv - cos * inv2;
    let re_b = cos - 3.0 * sin * inv - 3.0 * cos * inv2;
    // Im[...] / x through spherical Bessel functions
    let j0 = bessel_j0(x);
    let j1x = bessel_j1_over_x(x);
    let im_a = j0 - j1x;
    let im_b = j0 - 3.0 * j1x;

    let pre_re = 1.0 / (4.0 * PI * d);
    let pre_im = k0 / (4.0 * PI);
    let rh = [r[0] / d, r[1] / d, r[2] / d];
    let mut re = [[0.0; 3]; 3];
    let mut im = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let delta = if a == b { 1.0 } else { 0.0 };
            let rr = rh[a] * rh[b];
            re[a][b] = pre_re * (re_a * delta - re_b * rr);
            im[a][b] = pre_im * (im_a * delta - im_b * rr);
        }
    }
    Ok(GreenParts { re, im })
}

/// The complex dyadic Green's tensor `G(r)` at wavenumber `k0`.
pub fn green_tensor(r: &Vec3, k0: f64) -> Result<Tensor3, GreensError> {
    green_parts(r, k0).map(|p| p.to_complex())
}

/// Coherent and dissipative spin blocks for one ordered emitter pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairCoupling {
    /// `J^{σσ'}`, indexed by [`Spin::index`].
    pub j: SpinBlock,
    /// `Γ^{σσ'}`
    pub gamma: SpinBlock,
}

impl PairCoupling {
    /// On-site terms in the rotating frame: `J_ii = 0`, `Γ_ii = Γ0 𝟙`.
    pub fn on_site() -> Self {
        let zero = C64::new(0.0, 0.0);
        let g0 = C64::new(GAMMA0, 0.0);
        PairCoupling {
            j: [[zero; 2]; 2],
            gamma: [[g0, zero], [zero, g0]],
        }
    }

    /// `J - (i/2) Γ` for one spin entry.
    pub fn effective(&self, left: Spin, right: Spin) -> C64 {
        let (a, b) = (left.index(), right.index());
        self.j[a][b] - C64::new(0.0, 0.5) * self.gamma[a][b]
    }
}

/// Couplings from emitter `j` (at `r_j`) to emitter `i` (at `r_i`).
pub fn pair_coupling(r_i: &Vec3, r_j: &Vec3, basis: &PolarizationBasis) -> Result<PairCoupling, GreensError> {
    let parts = green_parts(&sub(r_i, r_j), K0)?;
    Ok(coupling_from_parts(&parts, basis))
}

pub fn coupling_from_parts(parts: &GreenParts, basis: &PolarizationBasis) -> PairCoupling {
    let j_scale = -1.5 * WAVELENGTH * GAMMA0;
    let g_scale = 3.0 * WAVELENGTH * GAMMA0;
    let mut out = PairCoupling {
        j: [[C64::new(0.0, 0.0); 2]; 2],
        gamma: [[C64::new(0.0, 0.0); 2]; 2],
    };
    for s in Spin::BOTH {
        for t in Spin::BOTH {
            out.j[s.index()][t.index()] = basis.contract_real(&parts.re, s, t) * j_scale;
            out.gamma[s.index()][t.index()] = basis.contract_real(&parts.im, s, t) * g_scale;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_green(r: &Vec3, k: f64) -> Tensor3 {
        let d = norm(r);
        let x = k * d;
        let i = C64::new(0.0, 1.0);
        let a = C64::new(1.0, 0.0) + i / x - 1.0 / (x * x);
        let b = C64::new(1.0, 0.0) + 3.0 * i / x - 3.0 / (x * x);
        let pre = (i * x).exp() / (4.0 * PI * d);
        let mut g = [[C64::new(0.0, 0.0); 3]; 3];
        for p in 0..3 {
            for q in 0..3 {
                let delta = if p == q { 1.0 } else { 0.0 };
                g[p][q] = pre * (a * delta - b * (r[p] * r[q] / (d * d)));
            }
        }
        g
    }

    #[test]
    fn matches_naive_closed_form_at_moderate_distance() {
        for r in [[0.1, 0.2, -0.3], [0.7, 0.0, 0.0], [1.3, -2.0, 0.4], [0.0, 0.0, 0.19]] {
            let g = green_tensor(&r, K0).unwrap();
            let n = naive_green(&r, K0);
            for a in 0..3 {
                for b in 0..3 {
                    assert!((g[a][b] - n[a][b]).norm() < 1e-12 * (1.0 + n[a][b].norm()), "{r:?} {a}{b}");
                }
            }
        }
    }

    #[test]
    fn bessel_series_and_closed_form_agree_near_switch() {
        for x in [0.9, 0.99, 1.0, 1.01, 1.1] {
            let closed = (f64::sin(x) / x - f64::cos(x)) / (x * x);
            assert!((bessel_j1_over_x(x) - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_and_even() {
        let r = [0.03, -0.11, 0.27];
        let g = green_tensor(&r, K0).unwrap();
        let gm = green_tensor(&[-r[0], -r[1], -r[2]], K0).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(g[a][b], g[b][a]);
                assert_eq!(g[a][b], gm[a][b]);
            }
        }
    }

    #[test]
    fn zero_separation_is_an_error() {
        assert_eq!(green_tensor(&[0.0; 3], K0), Err(GreensError::ZeroSeparation));
        let b = PolarizationBasis;
        assert!(pair_coupling(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &b).is_err());
    }

    #[test]
    fn closed_form_contraction_matches_vectors() {
        let b = PolarizationBasis;
        let m = [[0.3, -1.2, 0.5], [0.7, 2.0, -0.4], [0.1, 0.9, -3.0]];
        for s in Spin::BOTH {
            for t in Spin::BOTH {
                let (es, et) = (b.vector(s), b.vector(t));
                let mut acc = C64::new(0.0, 0.0);
                for p in 0..3 {
                    for q in 0..3 {
                        acc += es[p].conj() * m[p][q] * et[q];
                    }
                }
                assert!((acc - b.contract_real(&m, s, t)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn on_site_block() {
        let c = PairCoupling::on_site();
        assert_eq!(c.effective(Spin::Up, Spin::Up), C64::new(0.0, -0.5));
        assert_eq!(c.effective(Spin::Up, Spin::Down), C64::new(0.0, 0.0));
    }
}
