//! Single-excitation no-jump dynamics and transport observables.
//!
//! A state is a statistical mixture of pure branches `Σ_b p_b |a_b⟩⟨a_b|`.
//! Every branch evolves as `a(t) = exp(-i H_eff t) a(0)`, which is equivalent to
//! the no-jump master equation `ρ̇ = -i (H_eff ρ - ρ H_eff†)`. The propagator
//! diagonalizes `H_eff` once; if the eigenvector matrix is too ill-conditioned
//! it falls back to fixed-step RK4.

use thiserror::Error;

use crate::exec::Execution;
use crate::geometry::EmitterGeometry;
use crate::greens::Spin;
use crate::hamiltonian::{basis_index, effective, CouplingTensor, EffectiveHamiltonian};
use crate::linalg::{self, CMat, LinalgError};
use crate::ode::{self, DormandPrince, OdeError};
use crate::C64;

/// Condition number of the eigenvector matrix above which the spectral
/// propagator is abandoned.
pub const MAX_CONDITION: f64 = 1e8;
/// RK4 step (in `1/Γ0`) of the fallback propagator.
pub const FALLBACK_STEP: f64 = 1e-3;
/// Largest system accepted by [`master_equation_check`].
pub const MASTER_EQUATION_MAX_SITES: usize = 8;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("site {site} out of range for {n_sites} emitters")]
    SiteOutOfRange { site: usize, n_sites: usize },
    #[error("spin-up probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("output times must be finite, sorted and not before the state time")]
    InvalidTimes,
    #[error("state dimension {state} does not match Hamiltonian dimension {hamiltonian}")]
    DimensionMismatch { state: usize, hamiltonian: usize },
    #[error("master-equation check limited to {max} sites, got {got}")]
    TooLarge { got: usize, max: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub weight: f64,
    pub amplitudes: Vec<C64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExcitationState {
    pub branches: Vec<Branch>,
    pub time: f64,
}

/// `p_up |↑_site⟩⟨↑_site| + (1 - p_up) |↓_site⟩⟨↓_site|`; zero-weight branches
/// are dropped.
pub fn initial_state(n_sites: usize, site: usize, p_up: f64) -> Result<ExcitationState, DynamicsError> {
    if site >= n_sites {
        return Err(DynamicsError::SiteOutOfRange { site, n_sites });
    }
    if !(0.0..=1.0).contains(&p_up) {
        return Err(DynamicsError::ProbabilityOutOfRange(p_up));
    }
    let localized = |spin: Spin| {
        let mut a = vec![C64::new(0.0, 0.0); 2 * n_sites];
        a[basis_index(site, spin)] = C64::new(1.0, 0.0);
        a
    };
    let branches = [(p_up, Spin::Up), (1.0 - p_up, Spin::Down)]
        .into_iter()
        .filter(|(p, _)| *p > 0.0)
        .map(|(weight, spin)| Branch {
            weight,
            amplitudes: localized(spin),
        })
        .collect();
    Ok(ExcitationState { branches, time: 0.0 })
}

impl ExcitationState {
    pub fn dim(&self) -> usize {
        self.branches.first().map_or(0, |b| b.amplitudes.len())
    }

    pub fn n_sites(&self) -> usize {
        self.dim() / 2
    }

    /// `⟨b†_a b_a⟩` for every basis index `a`.
    pub fn populations(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for b in &self.branches {
            for (o, a) in out.iter_mut().zip(&b.amplitudes) {
                *o += b.weight * a.norm_sqr();
            }
        }
        out
    }

    /// `Tr ρ`
    pub fn trace(&self) -> f64 {
        self.branches
            .iter()
            .map(|b| b.weight * linalg::norm_sqr(&b.amplitudes))
            .sum()
    }

    pub fn density_matrix(&self) -> CMat {
        let n = self.dim();
        let mut rho = linalg::zeros(n);
        for b in &self.branches {
            for j in 0..n {
                let aj = b.amplitudes[j].conj() * b.weight;
                if aj == C64::new(0.0, 0.0) {
                    continue;
                }
                for i in 0..n {
                    rho[(i, j)] += b.amplitudes[i] * aj;
                }
            }
        }
        rho
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PropagatorKind {
    Spectral { condition_number: f64 },
    TimeStepped { step: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct PropagatorOptions {
    pub max_condition: f64,
    pub fallback_step: f64,
    /// Skip the eigendecomposition and always time-step.
    pub force_stepping: bool,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        PropagatorOptions {
            max_condition: MAX_CONDITION,
            fallback_step: FALLBACK_STEP,
            force_stepping: false,
        }
    }
}

/// `exp(-i H_eff t)` applied to branch amplitudes.
#[derive(Clone, Debug)]
pub struct Propagator {
    kind: PropagatorKind,
    hamiltonian: CMat,
    eigenvalues: Vec<C64>,
    vectors: CMat,
    inverse: CMat,
}

impl Propagator {
    pub fn new(h: &EffectiveHamiltonian) -> Result<Self, DynamicsError> {
        Self::with_options(h, PropagatorOptions::default())
    }

    pub fn with_options(h: &EffectiveHamiltonian, opts: PropagatorOptions) -> Result<Self, DynamicsError> {
        let stepped = |h: &EffectiveHamiltonian| Propagator {
            kind: PropagatorKind::TimeStepped {
                step: opts.fallback_step,
            },
            hamiltonian: h.matrix.clone(),
            eigenvalues: Vec::new(),
            vectors: CMat::zeros(0, 0),
            inverse: CMat::zeros(0, 0),
        };
        if opts.force_stepping {
            return Ok(stepped(h));
        }
        if h.hermitian_only {
            let (values, vectors) = linalg::eigen_hermitian(&h.matrix)?;
            let inverse = vectors.adjoint().to_owned();
            return Ok(Propagator {
                kind: PropagatorKind::Spectral { condition_number: 1.0 },
                hamiltonian: h.matrix.clone(),
                eigenvalues: values.into_iter().map(|e| C64::new(e, 0.0)).collect(),
                vectors,
                inverse,
            });
        }
        let Ok((values, vectors)) = linalg::eigen_general(&h.matrix) else {
            return Ok(stepped(h));
        };
        let cond = linalg::condition_number(&vectors)?;
        if !cond.is_finite() || cond > opts.max_condition {
            return Ok(stepped(h));
        }
        let inverse = linalg::inverse(&vectors);
        Ok(Propagator {
            kind: PropagatorKind::Spectral { condition_number: cond },
            hamiltonian: h.matrix.clone(),
            eigenvalues: values,
            vectors,
            inverse,
        })
    }

    pub fn kind(&self) -> PropagatorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    fn check(&self, state: &ExcitationState, times: &[f64]) -> Result<(), DynamicsError> {
        if state.dim() != self.dim() {
            return Err(DynamicsError::DimensionMismatch {
                state: state.dim(),
                hamiltonian: self.dim(),
            });
        }
        let sorted = times.windows(2).all(|w| w[0] <= w[1]);
        if !sorted || times.iter().any(|t| !t.is_finite() || *t < state.time) {
            return Err(DynamicsError::InvalidTimes);
        }
        Ok(())
    }

    /// States at each of the (sorted) `times`.
    pub fn propagate(
        &self,
        state: &ExcitationState,
        times: &[f64],
        exec: Execution,
    ) -> Result<Vec<ExcitationState>, DynamicsError> {
        self.check(state, times)?;
        let t0 = state.time;
        match self.kind {
            PropagatorKind::Spectral { .. } => {
                let modal: Vec<Vec<C64>> = state
                    .branches
                    .iter()
                    .map(|b| linalg::matvec(&self.inverse, &b.amplitudes))
                    .collect();
                Ok(exec.map(times.len(), |i| {
                    let dt = times[i] - t0;
                    let phases: Vec<C64> = self
                        .eigenvalues
                        .iter()
                        .map(|l| (C64::new(0.0, -dt) * l).exp())
                        .collect();
                    let branches = state
                        .branches
                        .iter()
                        .zip(&modal)
                        .map(|(b, c)| {
                            let scaled: Vec<C64> = c.iter().zip(&phases).map(|(x, p)| x * p).collect();
                            Branch {
                                weight: b.weight,
                                amplitudes: linalg::matvec(&self.vectors, &scaled),
                            }
                        })
                        .collect();
                    ExcitationState {
                        branches,
                        time: times[i],
                    }
                }))
            }
            PropagatorKind::TimeStepped { step } => {
                let h = &self.hamiltonian;
                let per_branch = exec.try_map(state.branches.len(), |bi| {
                    ode::rk4(
                        |_, y, dy| {
                            let hy = linalg::matvec(h, y);
                            for (d, v) in dy.iter_mut().zip(hy) {
                                *d = C64::new(v.im, -v.re);
                            }
                        },
                        t0,
                        &state.branches[bi].amplitudes,
                        times,
                        step,
                    )
                })?;
                Ok(times
                    .iter()
                    .enumerate()
                    .map(|(ti, &t)| ExcitationState {
                        branches: state
                            .branches
                            .iter()
                            .zip(&per_branch)
                            .map(|(b, traj)| Branch {
                                weight: b.weight,
                                amplitudes: traj[ti].clone(),
                            })
                            .collect(),
                        time: t,
                    })
                    .collect())
            }
        }
    }

    pub fn propagate_to(&self, state: &ExcitationState, t: f64) -> Result<ExcitationState, DynamicsError> {
        Ok(self.propagate(state, &[t], Execution::Sequential)?.remove(0))
    }
}

/// Observables of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub trace: f64,
    pub p_up: f64,
    pub p_down: f64,
    /// `⟨S_z⟩ = P_↑ - P_↓`
    pub sz: f64,
    /// Population-weighted mean `z`.
    pub z_com: f64,
    pub site_up: Vec<f64>,
    pub site_down: Vec<f64>,
}

pub fn snapshot(state: &ExcitationState, z: &[f64]) -> Snapshot {
    let pops = state.populations();
    let site_up: Vec<f64> = pops.iter().step_by(2).copied().collect();
    let site_down: Vec<f64> = pops.iter().skip(1).step_by(2).copied().collect();
    let p_up: f64 = site_up.iter().sum();
    let p_down: f64 = site_down.iter().sum();
    let trace = state.trace();
    let weighted: f64 = z
        .iter()
        .zip(site_up.iter().zip(&site_down))
        .map(|(z, (u, d))| z * (u + d))
        .sum();
    Snapshot {
        time: state.time,
        trace,
        p_up,
        p_down,
        sz: p_up - p_down,
        z_com: if trace > 0.0 { weighted / trace } else { f64::NAN },
        site_up,
        site_down,
    }
}

/// Time series of transport observables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub trace: Vec<f64>,
    pub p_up: Vec<f64>,
    pub p_down: Vec<f64>,
    pub sz: Vec<f64>,
    pub z_com: Vec<f64>,
    /// `site_up[t][i]`
    pub site_up: Vec<Vec<f64>>,
    pub site_down: Vec<Vec<f64>>,
}

impl ObservableSeries {
    pub fn from_snapshots(snaps: Vec<Snapshot>) -> Self {
        let mut s = ObservableSeries::default();
        for snap in snaps {
            s.times.push(snap.time);
            s.trace.push(snap.trace);
            s.p_up.push(snap.p_up);
            s.p_down.push(snap.p_down);
            s.sz.push(snap.sz);
            s.z_com.push(snap.z_com);
            s.site_up.push(snap.site_up);
            s.site_down.push(snap.site_down);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the output time closest to `t`.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        (0..self.len()).min_by(|&a, &b| (self.times[a] - t).abs().total_cmp(&(self.times[b] - t).abs()))
    }
}

pub fn evolve(
    state: &ExcitationState,
    propagator: &Propagator,
    geom: &EmitterGeometry,
    times: &[f64],
    exec: Execution,
) -> Result<ObservableSeries, DynamicsError> {
    let z: Vec<f64> = geom.positions.iter().map(|p| p[2]).collect();
    let states = propagator.propagate(state, times, exec)?;
    let snaps = exec.map_slice(&states, |s| snapshot(s, &z));
    Ok(ObservableSeries::from_snapshots(snaps))
}

/// `n` equally spaced times covering `[0, t_max]`.
pub fn uniform_times(t_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Helicity `η = sign(⟨S_z⟩ v)` of the excitation at one output time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Helicity {
    Positive,
    Negative,
    Undefined,
}

impl Helicity {
    pub fn value(self) -> Option<f64> {
        match self {
            Helicity::Positive => Some(1.0),
            Helicity::Negative => Some(-1.0),
            Helicity::Undefined => None,
        }
    }
}

/// How the longitudinal group velocity `v` is estimated from `⟨z⟩(t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VelocityEstimate {
    /// `(z[i+w] - z[i-w]) / (t[i+w] - t[i-w])`, one-sided at the ends.
    Central { window: usize },
    /// Mean velocity since the first output time, `(z[i] - z[0]) / (t[i] - t[0])`.
    SinceLaunch,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HelicityOptions {
    /// `|⟨S_z⟩ v|` below this is reported as undefined.
    pub dead_band: f64,
    pub velocity: VelocityEstimate,
}

impl Default for HelicityOptions {
    fn default() -> Self {
        HelicityOptions {
            dead_band: 1e-6,
            velocity: VelocityEstimate::Central { window: 1 },
        }
    }
}

pub fn group_velocity(series: &ObservableSeries, estimate: VelocityEstimate) -> Vec<f64> {
    let n = series.len();
    let (t, z) = (&series.times, &series.z_com);
    (0..n)
        .map(|i| match estimate {
            VelocityEstimate::Central { window } => {
                let w = window.max(1);
                let lo = i.saturating_sub(w);
                let hi = (i + w).min(n.saturating_sub(1));
                if hi == lo || t[hi] == t[lo] {
                    0.0
                } else {
                    (z[hi] - z[lo]) / (t[hi] - t[lo])
                }
            }
            VelocityEstimate::SinceLaunch => {
                if i == 0 || t[i] == t[0] {
                    0.0
                } else {
                    (z[i] - z[0]) / (t[i] - t[0])
                }
            }
        })
        .collect()
}

pub fn helicity(series: &ObservableSeries, opts: &HelicityOptions) -> Vec<Helicity> {
    if series.len() < 2 {
        return vec![Helicity::Undefined; series.len()];
    }
    group_velocity(series, opts.velocity)
        .iter()
        .zip(&series.sz)
        .map(|(v, sz)| {
            let x = sz * v;
            if !x.is_finite() || x.abs() < opts.dead_band {
                Helicity::Undefined
            } else if x > 0.0 {
                Helicity::Positive
            } else {
                Helicity::Negative
            }
        })
        .collect()
}

/// First local maximum of the summed population on `far_sites`; a diagnostic
/// for the arrival time of the wave packet at the far end.
pub fn arrival_time(series: &ObservableSeries, far_sites: &[usize]) -> Option<f64> {
    let pop: Vec<f64> = (0..series.len())
        .map(|t| {
            far_sites
                .iter()
                .map(|&i| series.site_up[t][i] + series.site_down[t][i])
                .sum()
        })
        .collect();
    (1..pop.len().saturating_sub(1))
        .find(|&i| pop[i] > pop[i - 1] && pop[i] >= pop[i + 1])
        .map(|i| series.times[i])
}

/// Outcome of the dense master-equation cross-check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MasterEquationReport {
    /// Largest difference over all density-matrix entries, per-site
    /// populations, `Tr ρ`, `P_↑`, `P_↓` and `⟨S_z⟩` at the check times.
    pub max_deviation: f64,
    /// `|Tr ρ(t) - Tr ρ(0)|` from the integrated master equation.
    pub norm_drift: f64,
    pub check_times: usize,
}

/// Integrates `ρ̇ = -i(H_eff ρ - ρ H_eff†)` directly with an adaptive
/// Runge-Kutta method and compares it with branch propagation on a uniform
/// grid over `[0, t]`.
pub fn master_equation_check(
    state: &ExcitationState,
    coupling: &CouplingTensor,
    hermitian_only: bool,
    t: f64,
) -> Result<MasterEquationReport, DynamicsError> {
    if coupling.n_sites > MASTER_EQUATION_MAX_SITES {
        return Err(DynamicsError::TooLarge {
            got: coupling.n_sites,
            max: MASTER_EQUATION_MAX_SITES,
        });
    }
    let h = effective(coupling, hermitian_only);
    let n = h.dim();
    let times = uniform_times(t, 11);
    let propagator = Propagator::new(&h)?;
    let branch_states = propagator.propagate(state, &times, Execution::Sequential)?;

    let rho0 = state.density_matrix();
    let flat0: Vec<C64> = (0..n * n).map(|k| rho0[(k % n, k / n)]).collect();
    let hm = &h.matrix;
    let rhs = |_t: f64, y: &[C64], dy: &mut [C64]| {
        // dρ = -i (H ρ - ρ H†), column-major flattening
        for j in 0..n {
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..n {
                    acc += hm[(i, k)] * y[k + j * n] - y[i + k * n] * hm[(j, k)].conj();
                }
                dy[i + j * n] = C64::new(acc.im, -acc.re);
            }
        }
    };
    let integrator = DormandPrince {
        rtol: 1e-11,
        atol: 1e-13,
        initial_step: 1e-4,
        max_step: 0.05,
    };
    let rhos = integrator.integrate(rhs, state.time, &flat0, &times)?;

    let mut max_dev = 0.0f64;
    for (branch_state, rho) in branch_states.iter().zip(&rhos) {
        let reference = branch_state.density_matrix();
        for j in 0..n {
            for i in 0..n {
                max_dev = max_dev.max((reference[(i, j)] - rho[i + j * n]).norm());
            }
        }
        let pops: Vec<f64> = (0..n).map(|a| rho[a + a * n].re).collect();
        let trace: f64 = pops.iter().sum();
        let up: f64 = pops.iter().step_by(2).sum();
        let down: f64 = pops.iter().skip(1).step_by(2).sum();
        let ref_pops = branch_state.populations();
        for (a, b) in pops.iter().zip(&ref_pops) {
            max_dev = max_dev.max((a - b).abs());
        }
        let ref_up: f64 = ref_pops.iter().step_by(2).sum();
        let ref_down: f64 = ref_pops.iter().skip(1).step_by(2).sum();
        max_dev = max_dev
            .max((trace - branch_state.trace()).abs())
            .max((up - ref_up).abs())
            .max((down - ref_down).abs())
            .max(((up - down) - (ref_up - ref_down)).abs());
    }
    let trace_at = |rho: &Vec<C64>| (0..n).map(|a| rho[a + a * n].re).sum::<f64>();
    let norm_drift = (trace_at(rhos.last().expect("non-empty")) - trace_at(&flat0)).abs();
    Ok(MasterEquationReport {
        max_deviation: max_dev,
        norm_drift,
        check_times: times.len(),
    })
}
