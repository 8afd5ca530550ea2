//! Polarization-resolved emitted field.
//!
//! The positive-frequency field radiated by the `σ` component of a branch is
//! `F_σ(r) = C Σ_j G(r - r_j) ε̂_σ a_{jσ}` with `C = √(6π² Γ0 / λ0)` (`ε0 = 1`),
//! and the intensity is `I_σ(r) = Σ_b p_b |F_σ^{(b)}(r)|²`. Only relative
//! intensities are meaningful.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::ExcitationState;
use crate::exec::Execution;
use crate::geometry::{sub, EmitterGeometry, Vec3};
use crate::greens::{green_tensor, PolarizationBasis, Spin, GAMMA0, K0, WAVELENGTH};
use crate::hamiltonian::basis_index;
use crate::C64;

/// Points closer than this to an emitter are masked.
pub const MASK_RADIUS: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("plane needs at least 2 points per axis, got {0}x{1}")]
    GridTooSmall(usize, usize),
    #[error("plane extents must be finite and increasing")]
    BadExtent,
    #[error("state has {state} sites but geometry has {geometry}")]
    SizeMismatch { state: usize, geometry: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// In-plane axes `(u, v)` for a plane with this normal.
    pub fn in_plane(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::X, Axis::Z),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }
}

/// A rectangular grid on the plane `r[normal] = offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldPlane {
    pub normal: Axis,
    pub offset: f64,
    /// First in-plane axis range (`y` for the default plane).
    pub u_min: f64,
    pub u_max: f64,
    pub n_u: usize,
    /// Second in-plane axis range (`z` for the default plane).
    pub v_min: f64,
    pub v_max: f64,
    pub n_v: usize,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let denom = (n - 1) as f64;
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    // symmetric about the centre bit for bit
    (0..n)
        .map(|i| mid + half * (2.0 * i as f64 - denom) / denom)
        .collect()
}

impl FieldPlane {
    /// The `y`-`z` plane at `x = 10 r0`, `6 r0` wide in `y` and `1.2` helix
    /// lengths in `z`, at 101 x 201 points. `r0` is the largest distance of an
    /// emitter from the `z` axis.
    pub fn default_for(geom: &EmitterGeometry) -> Self {
        let r0 = geom
            .positions
            .iter()
            .map(|p| p[0].hypot(p[1]))
            .fold(0.0, f64::max);
        let r0 = if r0 > 0.0 { r0 } else { 0.05 * WAVELENGTH };
        let (z_lo, z_hi) = geom.z_range();
        let mid = 0.5 * (z_lo + z_hi);
        let half = 0.6 * (z_hi - z_lo).max(r0);
        FieldPlane {
            normal: Axis::X,
            offset: 10.0 * r0,
            u_min: -3.0 * r0,
            u_max: 3.0 * r0,
            n_u: 101,
            v_min: mid - half,
            v_max: mid + half,
            n_v: 201,
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.n_u < 2 || self.n_v < 2 {
            return Err(FieldError::GridTooSmall(self.n_u, self.n_v));
        }
        let ok = [self.offset, self.u_min, self.u_max, self.v_min, self.v_max]
            .iter()
            .all(|x| x.is_finite())
            && self.u_max > self.u_min
            && self.v_max > self.v_min;
        if ok {
            Ok(())
        } else {
            Err(FieldError::BadExtent)
        }
    }

    pub fn u_values(&self) -> Vec<f64> {
        linspace(self.u_min, self.u_max, self.n_u)
    }

    pub fn v_values(&self) -> Vec<f64> {
        linspace(self.v_min, self.v_max, self.n_v)
    }

    pub fn len(&self) -> usize {
        self.n_u * self.n_v
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point with in-plane coordinates `(u, v)`.
    pub fn point(&self, u: f64, v: f64) -> Vec3 {
        let (a, b) = self.normal.in_plane();
        let mut r = [0.0; 3];
        r[self.normal.index()] = self.offset;
        r[a.index()] = u;
        r[b.index()] = v;
        r
    }
}

/// `C = √(6π² Γ0 / λ0)`
pub fn field_prefactor() -> f64 {
    (6.0 * PI * PI * GAMMA0 / WAVELENGTH).sqrt()
}

/// `F_σ(r)` for one branch, or `None` within [`MASK_RADIUS`] of an emitter.
pub fn field_amplitude(geom: &EmitterGeometry, amplitudes: &[C64], r: &Vec3, spin: Spin) -> Option<[C64; 3]> {
    let basis = PolarizationBasis;
    let c = field_prefactor();
    let mut out = [C64::new(0.0, 0.0); 3];
    for (j, rj) in geom.positions.iter().enumerate() {
        let a = amplitudes[basis_index(j, spin)];
        let d = sub(r, rj);
        if (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() < MASK_RADIUS {
            return None;
        }
        if a == C64::new(0.0, 0.0) {
            continue;
        }
        let g = green_tensor(&d, K0).ok()?;
        let ge = basis.apply(&g, spin);
        for (o, x) in out.iter_mut().zip(ge) {
            *o += x * a * c;
        }
    }
    Some(out)
}

/// `I_σ(r)`; `NaN` at masked points.
pub fn intensity_at(geom: &EmitterGeometry, state: &ExcitationState, r: &Vec3, spin: Spin) -> f64 {
    let mut total = 0.0;
    for b in &state.branches {
        match field_amplitude(geom, &b.amplitudes, r, spin) {
            Some(f) => total += b.weight * f.iter().map(|x| x.norm_sqr()).sum::<f64>(),
            None => return f64::NAN,
        }
    }
    total
}

/// Intensity of one polarization on a plane at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldMap {
    pub plane: FieldPlane,
    pub time: f64,
    pub spin: Spin,
    /// `values[iu * n_v + iv]`; `NaN` where masked.
    pub values: Vec<f64>,
}

pub fn intensity_map(
    geom: &EmitterGeometry,
    state: &ExcitationState,
    plane: &FieldPlane,
    spin: Spin,
    exec: Execution,
) -> Result<FieldMap, FieldError> {
    plane.validate()?;
    if state.n_sites() != geom.n_sites() {
        return Err(FieldError::SizeMismatch {
            state: state.n_sites(),
            geometry: geom.n_sites(),
        });
    }
    let us = plane.u_values();
    let vs = plane.v_values();
    let values = exec.map(plane.len(), |idx| {
        let r = plane.point(us[idx / plane.n_v], vs[idx % plane.n_v]);
        intensity_at(geom, state, &r, spin)
    });
    Ok(FieldMap {
        plane: *plane,
        time: state.time,
        spin,
        values,
    })
}

impl FieldMap {
    pub fn get(&self, iu: usize, iv: usize) -> f64 {
        self.values[iu * self.plane.n_v + iv]
    }

    /// Largest unmasked value.
    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .filter(|x| x.is_finite())
            .fold(0.0, |m, &x| m.max(x))
    }

    /// Copy scaled to unit maximum (unchanged if the map is zero).
    pub fn normalized(&self) -> FieldMap {
        let max = self.max();
        let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
        FieldMap {
            values: self.values.iter().map(|x| x * scale).collect(),
            ..self.clone()
        }
    }

    /// Intensity-weighted mean of the second in-plane coordinate (`z` on the
    /// default plane).
    pub fn v_centroid(&self) -> Option<f64> {
        centroid(&[self], |_, v| v)
    }

    pub fn masked_points(&self) -> usize {
        self.values.iter().filter(|x| x.is_nan()).count()
    }
}

/// Intensity-weighted mean of `f(u, v)` over the summed maps (all on the
/// same plane).
pub fn centroid(maps: &[&FieldMap], f: impl Fn(f64, f64) -> f64) -> Option<f64> {
    let plane = maps.first()?.plane;
    let us = plane.u_values();
    let vs = plane.v_values();
    let (mut num, mut den) = (0.0, 0.0);
    for (iu, u) in us.iter().enumerate() {
        for (iv, v) in vs.iter().enumerate() {
            let w: f64 = maps.iter().map(|m| m.get(iu, iv)).filter(|x| x.is_finite()).sum();
            num += w * f(*u, *v);
            den += w;
        }
    }
    (den > 0.0).then(|| num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::initial_state;

    fn single() -> EmitterGeometry {
        EmitterGeometry::from_positions(vec![[0.0; 3]], "one").unwrap()
    }

    #[test]
    fn opposite_polarization_is_dark() {
        let g = single();
        let s = initial_state(1, 0, 1.0).unwrap();
        let f = field_amplitude(&g, &s.branches[0].amplitudes, &[0.3, 0.2, 0.1], Spin::Down).unwrap();
        assert!(f.iter().all(|x| x.norm() == 0.0));
        assert!(intensity_at(&g, &s, &[0.3, 0.2, 0.1], Spin::Up) > 0.0);
    }

    #[test]
    fn far_field_inverse_square() {
        let g = single();
        let s = initial_state(1, 0, 1.0).unwrap();
        let dir = [0.6, 0.0, 0.8];
        let at = |r: f64| intensity_at(&g, &s, &[dir[0] * r, dir[1] * r, dir[2] * r], Spin::Up);
        let r = 200.0;
        assert!((at(r) / at(2.0 * r) - 4.0).abs() < 1e-2);
    }

    #[test]
    fn circular_dipole_is_axially_symmetric() {
        let g = single();
        let s = initial_state(1, 0, 1.0).unwrap();
        let base = intensity_at(&g, &s, &[0.7, 0.0, 0.3], Spin::Up);
        for phi in [0.4f64, 1.3, 2.9, -2.0] {
            let r = [0.7 * phi.cos(), 0.7 * phi.sin(), 0.3];
            assert!((intensity_at(&g, &s, &r, Spin::Up) - base).abs() < 1e-12 * base);
        }
    }

    #[test]
    fn masked_near_emitter() {
        let g = single();
        let s = initial_state(1, 0, 0.5).unwrap();
        assert!(intensity_at(&g, &s, &[1e-4, 0.0, 0.0], Spin::Up).is_nan());
        let plane = FieldPlane {
            normal: Axis::Z,
            offset: 0.0,
            u_min: -0.1,
            u_max: 0.1,
            n_u: 3,
            v_min: -0.1,
            v_max: 0.1,
            n_v: 3,
        };
        let map = intensity_map(&g, &s, &plane, Spin::Up, Execution::Sequential).unwrap();
        assert_eq!(map.masked_points(), 1);
        assert!(map.max() > 0.0);
        assert!((map.normalized().max() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn default_plane_is_symmetric() {
        let g = crate::geometry::build_helix(&crate::HelixParams::reference(crate::Handedness::Left)).unwrap();
        let p = FieldPlane::default_for(&g);
        assert!((p.offset - 0.5).abs() < 1e-12);
        let us = p.u_values();
        for i in 0..us.len() {
            assert_eq!(us[i], -us[us.len() - 1 - i]);
        }
        assert_eq!(p.point(0.1, 0.2), [p.offset, 0.1, 0.2]);
    }

    #[test]
    fn rejects_bad_planes() {
        let g = single();
        let s = initial_state(1, 0, 0.5).unwrap();
        let mut p = FieldPlane::default_for(&g);
        p.n_u = 1;
        assert!(matches!(
            intensity_map(&g, &s, &p, Spin::Up, Execution::Sequential),
            Err(FieldError::GridTooSmall(1, 201))
        ));
        let mut p = FieldPlane::default_for(&g);
        p.u_max = p.u_min;
        assert!(matches!(p.validate(), Err(FieldError::BadExtent)));
    }
}
