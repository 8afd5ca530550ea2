//! Mode drivers. Each returns diagnostics for the manifest; numerical
//! problems that still leave usable output are reported as a failure after
//! the files are written.

use std::path::Path;

use helical_core::bloch::{self, LatticeSum, Truncation};
use helical_core::checks::{self, CheckOptions};
use helical_core::dynamics::{
    self, arrival_time, evolve, helicity, initial_state, Helicity, HelicityOptions, ObservableSeries, Propagator,
    PropagatorKind, VelocityEstimate,
};
use helical_core::field::{self, Axis, FieldPlane};
use helical_core::hamiltonian::{assemble_with, effective, CouplingTensor};
use helical_core::topology::{self, BandGroup, ZakOptions};
use helical_core::{EmitterGeometry, Execution, Spin};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::config::{GroupName, Mode, RunConfig, Validated, ValidationErrors, VelocityKind};
use crate::output::{num, time_tag, OutputDir};

pub const DEFAULT_N_POINTS: usize = 200;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Validation(ValidationErrors),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

impl RunError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        RunError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Validation(_) => 1,
            RunError::Numerical(_) | RunError::Io { .. } => 2,
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> RunError {
    RunError::Numerical(e.to_string())
}

/// What a mode produced, apart from the files.
#[derive(Debug, Default)]
pub struct Report {
    pub diagnostics: Map<String, Value>,
    /// Set when the run finished but a numerical requirement was not met.
    pub failure: Option<String>,
}

impl Report {
    fn set(&mut self, key: &str, value: Value) {
        self.diagnostics.insert(key.to_string(), value);
    }
}

pub struct Context<'a> {
    pub validated: &'a Validated,
    pub exec: Execution,
    pub dump_matrices: bool,
}

impl Context<'_> {
    fn config(&self) -> &RunConfig {
        &self.validated.config
    }

    fn geometry(&self) -> &EmitterGeometry {
        &self.validated.geometry
    }

    fn hermitian_only(&self) -> bool {
        self.config().hermitian_only.unwrap_or(false)
    }
}

pub fn run_mode(ctx: &Context, out: &mut OutputDir) -> Result<Report, RunError> {
    let mut report = Report::default();
    out.json("geometry.json", &ctx.geometry().to_file())?;
    if ctx.dump_matrices {
        let c = coupling(ctx)?;
        out.matrix("J.csv", &c.j)?;
        out.matrix("Gamma.csv", &c.gamma)?;
    }
    match ctx.config().mode {
        Mode::Dynamics => run_dynamics(ctx, out, &mut report)?,
        Mode::Bands => run_bands(ctx, out, &mut report)?,
        Mode::Zak => run_zak(ctx, out, &mut report)?,
        Mode::Field => run_field(ctx, out, &mut report)?,
        Mode::Check => run_check(ctx, out, &mut report)?,
    }
    Ok(report)
}

fn coupling(ctx: &Context) -> Result<CouplingTensor, RunError> {
    assemble_with(ctx.geometry(), ctx.exec).map_err(numerical)
}

fn propagator(ctx: &Context, c: &CouplingTensor, report: &mut Report) -> Result<Propagator, RunError> {
    let h = effective(c, ctx.hermitian_only());
    let p = Propagator::new(&h).map_err(numerical)?;
    match p.kind() {
        PropagatorKind::Spectral { condition_number } => {
            report.set("propagator", json!("spectral"));
            report.set("condition_number", json!(condition_number));
        }
        PropagatorKind::TimeStepped { step } => {
            report.set("propagator", json!("rk4"));
            report.set("rk4_step", json!(step));
        }
    }
    report.set("hermiticity_error", json!(c.hermiticity_error()));
    Ok(p)
}

fn sorted_times(mut t: Vec<f64>) -> Vec<f64> {
    t.sort_by(f64::total_cmp);
    t.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    t
}

fn helicity_options(cfg: &RunConfig) -> HelicityOptions {
    let mut opts = HelicityOptions::default();
    if let Some(h) = &cfg.helicity {
        if let Some(d) = h.dead_band {
            opts.dead_band = d;
        }
        opts.velocity = match h.velocity.unwrap_or(VelocityKind::Central) {
            VelocityKind::Central => VelocityEstimate::Central {
                window: h.window.unwrap_or(1),
            },
            VelocityKind::SinceLaunch => VelocityEstimate::SinceLaunch,
        };
    }
    opts
}

fn eta_text(h: Helicity) -> String {
    h.value().map_or_else(|| "nan".to_string(), |v| format!("{v}"))
}

fn run_dynamics(ctx: &Context, out: &mut OutputDir, report: &mut Report) -> Result<(), RunError> {
    let cfg = ctx.config();
    let geom = ctx.geometry();
    let init = cfg.initial_state.expect("validated");
    let grid = cfg.time_grid.clone().expect("validated");
    let t_max = grid.t_max.unwrap_or(2.0 * grid.tau);
    let snapshots = grid.snapshots.clone().unwrap_or_default();
    let mut times = dynamics::uniform_times(t_max, grid.n_points.unwrap_or(DEFAULT_N_POINTS));
    times.push(grid.tau);
    times.extend(&snapshots);
    let times = sorted_times(times);

    let c = coupling(ctx)?;
    let prop = propagator(ctx, &c, report)?;
    let state = initial_state(geom.n_sites(), init.site, init.p_up).map_err(numerical)?;
    let series = evolve(&state, &prop, geom, &times, ctx.exec).map_err(numerical)?;
    let eta = helicity(&series, &helicity_options(cfg));

    out.csv(
        "timeseries.csv",
        &["t", "trace", "P_up", "P_down", "Sz", "z_com", "eta"],
        (0..series.len()).map(|i| {
            [
                num(series.times[i]),
                num(series.trace[i]),
                num(series.p_up[i]),
                num(series.p_down[i]),
                num(series.sz[i]),
                num(series.z_com[i]),
                eta_text(eta[i]),
            ]
        }),
    )?;
    for &t in &snapshots {
        write_snapshot(out, geom, &series, t)?;
    }

    let i = series.nearest_index(grid.tau).expect("non-empty series");
    let launch = HelicityOptions {
        velocity: VelocityEstimate::SinceLaunch,
        ..helicity_options(cfg)
    };
    let eta_tau = helicity(&series, &launch)[i];
    let xi = geom.source.map(|h| h.handedness.xi());
    let chi = match (xi, eta_tau.value()) {
        (Some(x), Some(e)) => Some(x * e),
        _ => None,
    };
    let per_turn = geom.source.map_or(1, |h| h.sites_per_turn);
    let n = geom.n_sites();
    let far: Vec<usize> = if init.site < n / 2 {
        (n.saturating_sub(per_turn)..n).collect()
    } else {
        (0..per_turn.min(n)).collect()
    };
    out.json(
        "summary.json",
        &json!({
            "tau": grid.tau,
            "trace": series.trace[i],
            "P_up": series.p_up[i],
            "P_down": series.p_down[i],
            "Sz": series.sz[i],
            "z_com": series.z_com[i],
            "eta": eta_tau.value(),
            "chi": chi,
            "arrival_time": arrival_time(&series, &far),
        }),
    )?;

    report.set("final_trace", json!(series.trace.last()));
    let max_step_increase = series.trace.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    report.set("max_trace_increase", json!(max_step_increase));
    if series.trace.iter().any(|x| !x.is_finite()) {
        report.failure = Some("non-finite populations".into());
    } else if ctx.hermitian_only() {
        let drift = series.trace.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
        report.set("norm_drift", json!(drift));
        if drift > 1e-8 {
            report.failure = Some(format!("coherent evolution changed the norm by {drift:e}"));
        }
    } else if max_step_increase > 1e-10 {
        report.failure = Some(format!("norm increased by {max_step_increase:e}"));
    }
    Ok(())
}

fn write_snapshot(out: &mut OutputDir, geom: &EmitterGeometry, series: &ObservableSeries, t: f64) -> Result<(), RunError> {
    let i = series.nearest_index(t).expect("non-empty series");
    out.csv(
        &format!("snapshot_t{}.csv", time_tag(t)),
        &["site", "z", "p_up", "p_down"],
        (0..geom.n_sites()).map(|s| {
            [
                s.to_string(),
                num(geom.z(s)),
                num(series.site_up[i][s]),
                num(series.site_down[i][s]),
            ]
        }),
    )
}

fn run_bands(ctx: &Context, out: &mut OutputDir, report: &mut Report) -> Result<(), RunError> {
    let cfg = ctx.config();
    let params = cfg.helix().expect("validated");
    let spec = cfg.bands.clone().unwrap_or_default();
    let m_cut = spec.m_cut.unwrap_or(bloch::DEFAULT_M_CUT);
    let truncation = spec.truncation.unwrap_or(Truncation::Sharp);
    let sum = LatticeSum::with_truncation(params, m_cut, truncation, ctx.exec).map_err(numerical)?;
    let grid = bloch::bz_grid(params.pitch, spec.n_k.unwrap_or(bloch::DEFAULT_N_K));
    let bs = bloch::band_structure(&sum, &grid, ctx.hermitian_only(), ctx.exec).map_err(numerical)?;

    out.csv(
        "bands.csv",
        &["k", "band", "energy", "gamma", "sz", "v", "in_light_cone"],
        bs.k.iter().zip(&bs.bands).flat_map(|(k, row)| {
            row.iter().enumerate().map(move |(n, b)| {
                [
                    num(*k),
                    n.to_string(),
                    num(b.energy),
                    num(b.gamma),
                    num(b.sz),
                    num(b.velocity),
                    b.light_cone.to_string(),
                ]
            })
        }),
    )?;

    let sym = bloch::symmetry_report(&bs);
    report.set("m_cut", json!(m_cut));
    report.set("truncation", json!(truncation));
    report.set("n_k", json!(bs.k.len()));
    report.set("max_convergence", json!(bs.max_convergence()));
    report.set(
        "symmetry",
        json!({"energy": sym.energy, "gamma": sym.gamma, "sz": sym.sz, "sz_invariant": sym.sz_invariant, "pairs": sym.pairs}),
    );
    report.set("ambiguous_continuations", json!(bs.ambiguous.iter().filter(|a| **a).count()));
    if bs.bands.iter().flatten().any(|b| !b.energy.is_finite() || !b.gamma.is_finite()) {
        report.failure = Some("non-finite band energies".into());
    }
    Ok(())
}

fn run_zak(ctx: &Context, out: &mut OutputDir, report: &mut Report) -> Result<(), RunError> {
    let cfg = ctx.config();
    let params = cfg.helix().expect("validated");
    let spec = cfg.zak.clone().unwrap_or_default();
    let defaults = ZakOptions::default();
    let opts = ZakOptions {
        n_k: spec.n_k.unwrap_or(defaults.n_k),
        m_cut: spec.m_cut.unwrap_or(defaults.m_cut),
        hermitian_only: !spec.biorthogonal.unwrap_or(false),
    };
    let sum = LatticeSum::with_execution(params, opts.m_cut, ctx.exec).map_err(numerical)?;
    let groups = spec.band_groups.unwrap_or_else(|| vec![GroupName::Lower, GroupName::Upper]);
    let mut details = Vec::new();
    for g in groups {
        let group = match g {
            GroupName::Lower => BandGroup::Lower,
            GroupName::Upper => BandGroup::Upper,
            GroupName::All => BandGroup::All,
        };
        let z = topology::zak_phase_with(&sum, &group, &opts, ctx.exec).map_err(numerical)?;
        out.json(&format!("zak_{}.json", z.band_group), &z.record())?;
        if !z.well_defined && report.failure.is_none() {
            report.failure = Some(format!(
                "Zak phase of the {} group is ill-defined (min |det| {:e})",
                z.band_group, z.min_overlap_det
            ));
        }
        details.push(json!({
            "band_group": z.band_group,
            "bands": z.bands,
            "min_overlap_det": z.min_overlap_det,
            "well_defined": z.well_defined,
            "convergence": z.convergence,
        }));
    }
    report.set("hermitian_only", json!(opts.hermitian_only));
    report.set("m_cut", json!(opts.m_cut));
    report.set("groups", Value::Array(details));
    Ok(())
}

fn axis_name(a: Axis) -> &'static str {
    match a {
        Axis::X => "x",
        Axis::Y => "y",
        Axis::Z => "z",
    }
}

fn spin_name(s: Spin) -> &'static str {
    match s {
        Spin::Up => "up",
        Spin::Down => "down",
    }
}

fn run_field(ctx: &Context, out: &mut OutputDir, report: &mut Report) -> Result<(), RunError> {
    let cfg = ctx.config();
    let geom = ctx.geometry();
    let init = cfg.initial_state.expect("validated");
    let spec = cfg.field.clone().expect("validated");
    let plane = spec.plane.unwrap_or_else(|| FieldPlane::default_for(geom));
    let normalize = spec.normalize.unwrap_or(false);
    let (u_axis, v_axis) = plane.normal.in_plane();
    let (u_name, v_name) = (axis_name(u_axis), axis_name(v_axis));

    let c = coupling(ctx)?;
    let prop = propagator(ctx, &c, report)?;
    let state = initial_state(geom.n_sites(), init.site, init.p_up).map_err(numerical)?;
    let times = sorted_times(spec.times.clone());
    let states = prop.propagate(&state, &times, ctx.exec).map_err(numerical)?;
    let us = plane.u_values();
    let vs = plane.v_values();
    let mut maxima = Vec::new();
    for s in &states {
        for spin in Spin::BOTH {
            let map = field::intensity_map(geom, s, &plane, spin, ctx.exec).map_err(numerical)?;
            let max = map.max();
            let written = if normalize { map.normalized() } else { map.clone() };
            let stem = format!("field_t{}_{}", time_tag(s.time), spin_name(spin));
            out.csv(
                &format!("{stem}.csv"),
                &[u_name, v_name, "intensity"],
                (0..plane.n_u).flat_map(|iu| {
                    let written = &written;
                    let (us, vs) = (&us, &vs);
                    (0..plane.n_v).map(move |iv| [num(us[iu]), num(vs[iv]), num(written.get(iu, iv))])
                }),
            )?;
            out.json(
                &format!("{stem}.json"),
                &json!({
                    "plane": plane,
                    "time": s.time,
                    "spin": spin,
                    "normalized": normalize,
                    "normalization_max": max,
                    "masked_points": map.masked_points(),
                    "centroid": map.v_centroid(),
                    "trace": s.trace(),
                }),
            )?;
            maxima.push(json!({"time": s.time, "spin": spin, "max": max}));
        }
    }
    report.set("maxima", Value::Array(maxima));
    Ok(())
}

fn run_check(ctx: &Context, out: &mut OutputDir, report: &mut Report) -> Result<(), RunError> {
    let cfg = ctx.config();
    let defaults = CheckOptions::default();
    let spec = cfg.check.clone().unwrap_or_default();
    let opts = CheckOptions {
        helix: *cfg.helix().expect("validated"),
        m_cut: spec.m_cut.unwrap_or(defaults.m_cut),
        n_k: spec.n_k.unwrap_or(defaults.n_k),
    };
    let outcomes = checks::run_checks(&opts, ctx.exec);
    out.json("checks.json", &outcomes)?;
    let failed: Vec<&str> = outcomes.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    report.set("checks", json!(outcomes.len()));
    report.set("failed", json!(failed));
    if !failed.is_empty() {
        report.failure = Some(format!("{} of {} checks failed: {}", failed.len(), outcomes.len(), failed.join(", ")));
    }
    Ok(())
}
