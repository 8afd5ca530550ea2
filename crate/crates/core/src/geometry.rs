//! Emitter arrangements.
//!
//! Helices are built with their axis along `ẑ`, one emitter per
//! `2π/𝒩` of azimuth:
//!
//! ```text
//! r_n = (r0 cos φ_n, -ξ r0 sin φ_n, n a / 𝒩),   φ_n = 2π n / 𝒩
//! ```
//!
//! With this sign, `ξ = +1` is a left-handed screw (the azimuth turns clockwise
//! seen from `+z` while climbing) and `ξ = -1` is its mirror image.

use std::f64::consts::TAU;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = [f64; 3];

/// Closest allowed approach of two emitters (in `λ0`).
pub const MIN_SEPARATION: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid helix: {}", .0.join("; "))]
    InvalidHelix(Vec<String>),
    #[error("geometry has no emitters")]
    Empty,
    #[error("emitters {0} and {1} coincide")]
    Coincident(usize, usize),
    #[error("emitter {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("cannot read geometry file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed geometry file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Helix handedness `ξ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    /// `ξ = +1`
    Left,
    /// `ξ = -1`
    Right,
}

impl Handedness {
    pub fn xi(self) -> f64 {
        match self {
            Handedness::Left => 1.0,
            Handedness::Right => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Handedness::Left => Handedness::Right,
            Handedness::Right => Handedness::Left,
        }
    }
}

impl fmt::Display for Handedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Handedness::Left => write!(f, "left"),
            Handedness::Right => write!(f, "right"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HelixParams {
    /// `r0`, in `λ0`.
    pub radius: f64,
    /// `a`, rise per full turn, in `λ0`.
    pub pitch: f64,
    /// `𝒩`
    pub sites_per_turn: usize,
    /// `M`
    pub turns: usize,
    pub handedness: Handedness,
}

impl HelixParams {
    /// Parameters of the 60-site helix used for the transport figures.
    pub fn reference(handedness: Handedness) -> Self {
        HelixParams {
            radius: 0.05,
            pitch: 0.175,
            sites_per_turn: 3,
            turns: 20,
            handedness,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.sites_per_turn * self.turns
    }

    /// Every violated constraint, in a stable order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            out.push("radius must be positive".to_string());
        }
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            out.push("pitch must be positive".to_string());
        }
        if self.sites_per_turn == 0 {
            out.push("sites_per_turn must be at least 1".to_string());
        }
        if self.turns == 0 {
            out.push("turns must be at least 1".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GeometryError::InvalidHelix(problems))
        }
    }

    /// Position of site `n`; also valid for negative `n` and `n >= N`
    /// (used by the lattice sums of the infinite helix).
    pub fn site_position(&self, n: i64) -> Vec3 {
        let per_turn = self.sites_per_turn as i64;
        let phi = TAU * n.rem_euclid(per_turn) as f64 / per_turn as f64;
        let y = self.radius * phi.sin();
        let y = match self.handedness {
            Handedness::Left => -y,
            Handedness::Right => y,
        };
        [
            self.radius * phi.cos(),
            y,
            n as f64 * self.pitch / per_turn as f64,
        ]
    }
}

/// An ordered set of emitter positions.
#[derive(Clone, Debug, PartialEq)]
pub struct EmitterGeometry {
    pub positions: Vec<Vec3>,
    pub label: String,
    /// Generating helix, if any (up to a rigid rotation about `ẑ`).
    pub source: Option<HelixParams>,
}

/// On-disk form: `{"positions": [[x, y, z], ...], "label": "..."}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    pub positions: Vec<Vec3>,
    #[serde(default)]
    pub label: String,
}

pub fn build_helix(params: &HelixParams) -> Result<EmitterGeometry, GeometryError> {
    params.validate()?;
    let positions = (0..params.n_sites() as i64)
        .map(|n| params.site_position(n))
        .collect();
    Ok(EmitterGeometry {
        positions,
        label: format!(
            "{} helix r0={} a={} N={} M={}",
            params.handedness, params.radius, params.pitch, params.sites_per_turn, params.turns
        ),
        source: Some(*params),
    })
}

/// Reflection through the `x-z` plane (`y → -y`).
pub fn mirror_z_plane(geom: &EmitterGeometry) -> EmitterGeometry {
    EmitterGeometry {
        positions: geom.positions.iter().map(|p| [p[0], -p[1], p[2]]).collect(),
        label: format!("mirror({})", geom.label),
        source: geom.source.map(|h| HelixParams {
            handedness: h.handedness.flipped(),
            ..h
        }),
    }
}

/// Rigid rotation by `angle` (radians) about `ẑ`.
pub fn rotate_about_z(geom: &EmitterGeometry, angle: f64) -> EmitterGeometry {
    let (s, c) = angle.sin_cos();
    EmitterGeometry {
        positions: geom
            .positions
            .iter()
            .map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]])
            .collect(),
        label: geom.label.clone(),
        source: geom.source,
    }
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn norm(v: &Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn distance(a: &Vec3, b: &Vec3) -> f64 {
    norm(&sub(a, b))
}

impl EmitterGeometry {
    pub fn from_positions(positions: Vec<Vec3>, label: impl Into<String>) -> Result<Self, GeometryError> {
        let geom = EmitterGeometry {
            positions,
            label: label.into(),
            source: None,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        let text = std::fs::read_to_string(path)?;
        let file: GeometryFile = serde_json::from_str(&text)?;
        Self::from_positions(file.positions, file.label)
    }

    pub fn to_file(&self) -> GeometryFile {
        GeometryFile {
            positions: self.positions.clone(),
            label: self.label.clone(),
        }
    }

    pub fn n_sites(&self) -> usize {
        self.positions.len()
    }

    pub fn z(&self, site: usize) -> f64 {
        self.positions[site][2]
    }

    /// `(min z, max z)`.
    pub fn z_range(&self) -> (f64, f64) {
        self.positions
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[2]), hi.max(p[2])))
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.positions.is_empty() {
            return Err(GeometryError::Empty);
        }
        if let Some(i) = self.positions.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::NonFinite(i));
        }
        for i in 0..self.positions.len() {
            for j in i + 1..self.positions.len() {
                if distance(&self.positions[i], &self.positions[j]) < MIN_SEPARATION {
                    return Err(GeometryError::Coincident(i, j));
                }
            }
        }
        Ok(())
    }

    /// Full pairwise distance matrix, row-major.
    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        self.positions
            .iter()
            .map(|a| self.positions.iter().map(|b| distance(a, b)).collect())
            .collect()
    }
}
