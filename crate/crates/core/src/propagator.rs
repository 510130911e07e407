//! Time evolution of the three-level reduced density matrix.
//!
//! d rho/dt = -i [H(t), rho] - L{rho}, with L{rho} = [q, Lambda rho - rho Lambda^dagger]
//! and Lambda_jk(t) = q_jk K(t, E_j - E_k) read from the kernel tables.
//!
//! The integrator works in the interaction picture of diag(0, w0, w1), so the
//! free evolution is exact and RK4 only sees the drive and the dissipator.
//! Every state handed out is in the lab frame.

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bath::{BathSpec, KernelTables, N_FREQ};
use crate::circuit::ThreeLevelModel;
use crate::error::{Error, Result};
use crate::pulses::{PulseParams, PulseProgram};

pub type CMatrix3 = Matrix3<Complex64>;

const TRACE_DRIFT_LIMIT: f64 = 1e-9;
const ENTRY_LIMIT: f64 = 10.0;
const NEGATIVITY_LIMIT: f64 = -1e-6;

fn complexify(m: &Matrix3<f64>) -> CMatrix3 {
    m.map(|v| Complex64::new(v, 0.0))
}

fn commutator(a: &CMatrix3, b: &CMatrix3) -> CMatrix3 {
    a * b - b * a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(CMatrix3);

impl DensityMatrix {
    /// Validated density matrix: Hermitian and unit trace to 1e-9, eigenvalues >= -1e-6.
    pub fn new(m: CMatrix3) -> Result<Self> {
        let herm = hermiticity_residual(&m);
        if herm > 1e-9 {
            return Err(Error::InvalidDensityMatrix(format!("not Hermitian (residual {herm:e})")));
        }
        let tr = m.trace();
        if (tr - 1.0).norm() > 1e-9 {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr} != 1")));
        }
        let min = min_eigenvalue(&m);
        if min < NEGATIVITY_LIMIT {
            return Err(Error::InvalidDensityMatrix(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self(m))
    }

    /// |level><level|.
    pub fn pure(level: usize) -> Self {
        assert!(level < 3, "level {level} outside the three-level space");
        let mut m = CMatrix3::zeros();
        m[(level, level)] = Complex64::new(1.0, 0.0);
        Self(m)
    }

    pub fn matrix(&self) -> &CMatrix3 {
        &self.0
    }

    pub fn populations(&self) -> [f64; 3] {
        populations(&self.0)
    }

    pub fn purity(&self) -> f64 {
        purity(&self.0)
    }
}

pub fn populations(m: &CMatrix3) -> [f64; 3] {
    [m[(0, 0)].re, m[(1, 1)].re, m[(2, 2)].re]
}

pub fn purity(m: &CMatrix3) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum()
}

pub fn hermiticity_residual(m: &CMatrix3) -> f64 {
    (m - m.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn min_eigenvalue(m: &CMatrix3) -> f64 {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DissipationMode {
    /// Coherent evolution only.
    Off,
    /// Time-dependent kernel K(t, w) from the tables.
    Full,
    /// Long-time plateau K(inf, w); not positivity preserving at order xi.
    Markov,
}

impl DissipationMode {
    pub fn name(&self) -> &'static str {
        match self {
            DissipationMode::Off => "off",
            DissipationMode::Full => "full",
            DissipationMode::Markov => "markov",
        }
    }
}

impl fmt::Display for DissipationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DissipationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(DissipationMode::Off),
            "full" => Ok(DissipationMode::Full),
            "markov" => Ok(DissipationMode::Markov),
            other => Err(Error::InvalidSimulation(format!("unknown dissipation mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Integrator step (ns).
    pub dt: f64,
    /// Steps between stored samples.
    pub record_stride: usize,
    /// End of the integration (ns).
    pub t_end: f64,
    pub mode: DissipationMode,
}

/// Largest admissible step: resolve both the bath memory and the fastest level.
/// Pass `f64::INFINITY` for `omega_s` when no bath is attached.
pub fn max_step(model: &ThreeLevelModel, omega_s: f64) -> f64 {
    let level = 0.02 * 2.0 * std::f64::consts::PI / model.omega1;
    if omega_s.is_finite() {
        level.min(0.1 / omega_s)
    } else {
        level
    }
}

impl SimulationConfig {
    /// Config whose step divides `t_end` exactly.
    pub fn fitted(model: &ThreeLevelModel, omega_s: f64, t_end: f64, mode: DissipationMode) -> Self {
        let steps = (t_end / max_step(model, omega_s)).ceil().max(1.0);
        Self { dt: t_end / steps, record_stride: 100, t_end, mode }
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil() as usize
    }

    pub fn validate(&self, model: &ThreeLevelModel, omega_s: f64, gate_time: f64) -> Result<()> {
        let limit = max_step(model, omega_s);
        if self.dt.is_nan() || self.dt <= 0.0 || self.dt > limit * (1.0 + 1e-9) {
            return Err(Error::InvalidSimulation(format!("dt = {} outside (0, {limit}]", self.dt)));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidSimulation("record_stride must be positive".into()));
        }
        if !(self.t_end.is_finite() && self.t_end >= gate_time * (1.0 - 1e-12)) {
            return Err(Error::InvalidSimulation(format!("t_end = {} shorter than gate time {gate_time}", self.t_end)));
        }
        Ok(())
    }
}

/// H(t) = diag(0, w0, w1) + Omega(t) D / D_10.
pub fn assemble_hamiltonian(model: &ThreeLevelModel, program: Option<&PulseProgram>, t: f64) -> Matrix3<f64> {
    let bare = Matrix3::from_diagonal(&model.level_energies().into());
    match program {
        Some(p) => {
            let omega = p.drive(t);
            if omega == 0.0 {
                bare
            } else {
                bare + model.drive_operator() * omega
            }
        }
        None => bare,
    }
}

/// [q, Lambda rho - rho Lambda^dagger].
pub fn apply_dissipator(rho: &CMatrix3, q: &CMatrix3, lambda: &CMatrix3) -> CMatrix3 {
    let x = lambda * rho - rho * lambda.adjoint();
    commutator(q, &x)
}

/// Memory-kernel dissipator at time t.
pub fn dissipator(rho: &CMatrix3, q: &Matrix3<f64>, tables: &KernelTables, t: f64) -> Result<CMatrix3> {
    let lambda = tables.lambda(q, &tables.at(t)?);
    Ok(apply_dissipator(rho, &complexify(q), &lambda))
}

/// Time-local dissipator built from the long-time plateau of the tables.
pub fn markov_limit_dissipator(rho: &CMatrix3, q: &Matrix3<f64>, tables: &KernelTables) -> Result<CMatrix3> {
    let lambda = tables.lambda(q, &tables.plateau()?);
    Ok(apply_dissipator(rho, &complexify(q), &lambda))
}

/// Everything the right-hand side needs at one instant.
/// exp(i (E_j - E_k) t) entrywise, so that X_I = phases(t) .* X.
fn frame_phases(model: &ThreeLevelModel, t: f64) -> CMatrix3 {
    let e = model.level_energies();
    Matrix3::from_fn(|j, k| Complex64::from_polar(1.0, (e[j] - e[k]) * t))
}

fn to_lab(rho: &CMatrix3, model: &ThreeLevelModel, t: f64) -> CMatrix3 {
    rho.component_mul(&frame_phases(model, t).map(|z| z.conj()))
}

fn to_interaction(rho: &CMatrix3, model: &ThreeLevelModel, t: f64) -> CMatrix3 {
    rho.component_mul(&frame_phases(model, t))
}

/// Interaction-picture operators at one instant.
#[derive(Clone, Copy)]
struct Generator {
    drive: Option<CMatrix3>,
    q: CMatrix3,
    lambda: Option<CMatrix3>,
}

impl Generator {
    fn rhs(&self, rho: &CMatrix3) -> CMatrix3 {
        let mut out = CMatrix3::zeros();
        if let Some(v) = &self.drive {
            out -= commutator(v, rho) * Complex64::new(0.0, 1.0);
        }
        if let Some(lambda) = &self.lambda {
            out -= apply_dissipator(rho, &self.q, lambda);
        }
        out
    }
}

struct Dynamics<'a> {
    model: &'a ThreeLevelModel,
    program: Option<&'a PulseProgram>,
    tables: Option<&'a KernelTables>,
    markov: Option<CMatrix3>,
    mode: DissipationMode,
    q: CMatrix3,
    drive_operator: CMatrix3,
}

impl<'a> Dynamics<'a> {
    fn new(
        model: &'a ThreeLevelModel,
        program: Option<&'a PulseProgram>,
        tables: Option<&'a KernelTables>,
        mode: DissipationMode,
    ) -> Result<Self> {
        let markov = match mode {
            DissipationMode::Markov => {
                let t = tables.ok_or_else(|| Error::InvalidSimulation("markov mode needs kernel tables".into()))?;
                Some(t.lambda(&model.q_matrix, &t.plateau()?))
            }
            DissipationMode::Full if tables.is_none() => {
                return Err(Error::InvalidSimulation("full dissipation needs kernel tables".into()));
            }
            _ => None,
        };
        Ok(Self {
            model,
            program,
            tables,
            markov,
            mode,
            q: complexify(&model.q_matrix),
            drive_operator: complexify(&model.drive_operator()),
        })
    }

    fn generator(&self, t: f64) -> Result<Generator> {
        let omega = self.program.map_or(0.0, |p| p.drive(t));
        let lambda = match self.mode {
            DissipationMode::Off => None,
            DissipationMode::Markov => self.markov,
            DissipationMode::Full => {
                let tables = self.tables.expect("checked at construction");
                let k: [Complex64; N_FREQ] = tables.at(t)?;
                Some(tables.lambda(&self.model.q_matrix, &k))
            }
        };
        if omega == 0.0 && lambda.is_none() {
            return Ok(Generator { drive: None, q: self.q, lambda: None });
        }
        let phases = frame_phases(self.model, t);
        Ok(Generator {
            drive: (omega != 0.0).then(|| (self.drive_operator * Complex64::new(omega, 0.0)).component_mul(&phases)),
            q: self.q.component_mul(&phases),
            lambda: lambda.map(|l| l.component_mul(&phases)),
        })
    }
}

/// One classical Runge-Kutta step, given generators at t, t + dt/2 and t + dt.
fn rk4(rho: &CMatrix3, dt: f64, g: [&Generator; 3]) -> CMatrix3 {
    let k1 = g[0].rhs(rho);
    let k2 = g[1].rhs(&(rho + k1 * Complex64::new(0.5 * dt, 0.0)));
    let k3 = g[1].rhs(&(rho + k2 * Complex64::new(0.5 * dt, 0.0)));
    let k4 = g[2].rhs(&(rho + k3 * Complex64::new(dt, 0.0)));
    rho + (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * Complex64::new(dt / 6.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub hermiticity_residual: f64,
    pub trace_drift: f64,
}

/// Symmetrize, check and renormalize a freshly stepped state.
fn finish_step(next: CMatrix3, prev_trace: f64, t: f64) -> Result<(CMatrix3, StepDiagnostics)> {
    if next.iter().any(|v| !v.re.is_finite() || !v.im.is_finite() || v.norm() > ENTRY_LIMIT) {
        return Err(Error::StepInstability { t, reason: "density matrix entries diverged".into() });
    }
    let hermiticity_residual = hermiticity_residual(&next);
    let sym = (next + next.adjoint()) * Complex64::new(0.5, 0.0);
    let tr = sym.trace().re;
    let trace_drift = (tr - prev_trace).abs();
    if trace_drift > TRACE_DRIFT_LIMIT {
        return Err(Error::StepInstability { t, reason: format!("trace drift {trace_drift:e} in one step") });
    }
    Ok((sym / Complex64::new(tr, 0.0), StepDiagnostics { hermiticity_residual, trace_drift }))
}

/// Advance rho by one step of size dt from time t.
pub fn step(
    rho: &DensityMatrix,
    t: f64,
    dt: f64,
    model: &ThreeLevelModel,
    program: Option<&PulseProgram>,
    tables: Option<&KernelTables>,
    mode: DissipationMode,
) -> Result<DensityMatrix> {
    let dynamics = Dynamics::new(model, program, tables, mode)?;
    let g0 = dynamics.generator(t)?;
    let g1 = dynamics.generator(t + 0.5 * dt)?;
    let g2 = dynamics.generator(t + dt)?;
    let rho_i = to_interaction(&rho.0, model, t);
    let next = rk4(&rho_i, dt, [&g0, &g1, &g2]);
    let (m, _) = finish_step(next, rho.0.trace().re, t + dt)?;
    Ok(DensityMatrix(to_lab(&m, model, t + dt)))
}

/// Identity of a run, used to refuse combining unrelated trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunTag {
    pub omega0: f64,
    pub omega1: f64,
    pub pulse: Option<PulseParams>,
    pub bath: Option<BathSpec>,
    pub mode: DissipationMode,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryDiagnostics {
    pub max_trace_error: f64,
    pub max_hermiticity_residual: f64,
    pub min_eigenvalue: f64,
    pub max_purity_drift: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CMatrix3>,
    /// Window over which populations were averaged (the gate, or the whole run).
    pub averaging_window: f64,
    /// Trapezoid time averages of rho_00, rho_11, rho_22 over the window.
    pub averaged: [f64; 3],
    pub diagnostics: TrajectoryDiagnostics,
    pub tag: RunTag,
}

impl Trajectory {
    pub fn final_state(&self) -> &CMatrix3 {
        self.states.last().expect("trajectories hold at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectories hold at least the initial state")
    }

    /// Index of the sample closest to t.
    pub fn nearest_sample(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&s| s < t).min(self.times.len() - 1);
        if i > 0 && (self.times[i - 1] - t).abs() < (self.times[i] - t).abs() {
            i - 1
        } else {
            i
        }
    }

    pub fn state_at(&self, t: f64) -> &CMatrix3 {
        &self.states[self.nearest_sample(t)]
    }

    pub fn populations(&self) -> Vec<[f64; 3]> {
        self.states.iter().map(populations).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "t,rho00,rho11,rho22,re_rho01,im_rho01,re_rho12,im_rho12,re_rho02,im_rho02,purity\n",
        );
        for (t, m) in self.times.iter().zip(&self.states) {
            out.push_str(&format!(
                "{:.9e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                t,
                m[(0, 0)].re,
                m[(1, 1)].re,
                m[(2, 2)].re,
                m[(0, 1)].re,
                m[(0, 1)].im,
                m[(1, 2)].re,
                m[(1, 2)].im,
                m[(0, 2)].re,
                m[(0, 2)].im,
                purity(m)
            ));
        }
        out
    }
}

/// Integrate from t = 0 to `config.t_end`, sampling every `record_stride` steps
/// and always at the final time.
pub fn evolve(
    rho0: &DensityMatrix,
    model: &ThreeLevelModel,
    program: Option<&PulseProgram>,
    tables: Option<&KernelTables>,
    config: &SimulationConfig,
) -> Result<Trajectory> {
    let omega_s = tables.map(|t| t.bath.omega_s).unwrap_or(f64::INFINITY);
    let gate_time = program.map(|p| p.gate_time()).unwrap_or(0.0);
    config.validate(model, omega_s, gate_time)?;
    let dynamics = Dynamics::new(model, program, tables, config.mode)?;
    let n = config.steps();
    let dt = config.dt;
    let window = if program.is_some() { gate_time } else { config.t_end };

    let mut rho = rho0.0;
    let purity0 = purity(&rho);
    let mut diag = TrajectoryDiagnostics {
        max_trace_error: (rho.trace().re - 1.0).abs(),
        max_hermiticity_residual: 0.0,
        min_eigenvalue: min_eigenvalue(&rho),
        max_purity_drift: 0.0,
    };
    let mut times = vec![0.0];
    let mut states = vec![rho];
    let mut sums = [0.0; 3];
    let mut g_start = dynamics.generator(0.0)?;
    for i in 0..n {
        let t = i as f64 * dt;
        let h = if i + 1 == n { config.t_end - t } else { dt };
        let g_mid = dynamics.generator(t + 0.5 * h)?;
        let g_end = dynamics.generator(t + h)?;
        let next = rk4(&rho, h, [&g_start, &g_mid, &g_end]);
        let t_next = t + h;
        let (m, sd) = finish_step(next, rho.trace().re, t_next)?;

        // Trapezoid accumulation of populations inside the averaging window.
        let covered = (t_next.min(window) - t).max(0.0);
        if covered > 0.0 {
            let (a, b) = (populations(&rho), populations(&m));
            let frac = covered / h;
            for k in 0..3 {
                let end = a[k] + frac * (b[k] - a[k]);
                sums[k] += 0.5 * covered * (a[k] + end);
            }
        }

        rho = m;
        g_start = g_end;
        diag.max_hermiticity_residual = diag.max_hermiticity_residual.max(sd.hermiticity_residual);
        diag.max_purity_drift = diag.max_purity_drift.max((purity(&rho) - purity0).abs());
        if (i + 1) % config.record_stride == 0 || i + 1 == n {
            let min = min_eigenvalue(&rho);
            // The time-local limit is not positivity preserving; its excursions
            // are only reported through the diagnostics.
            if min < NEGATIVITY_LIMIT && config.mode != DissipationMode::Markov {
                return Err(Error::StepInstability { t: t_next, reason: format!("eigenvalue {min:e} below tolerance") });
            }
            diag.min_eigenvalue = diag.min_eigenvalue.min(min);
            diag.max_trace_error = diag.max_trace_error.max((rho.trace().re - 1.0).abs());
            times.push(t_next);
            states.push(to_lab(&rho, model, t_next));
        }
    }
    let averaged = if window > 0.0 { sums.map(|s| s / window) } else { populations(&rho0.0) };
    Ok(Trajectory {
        times,
        states,
        averaging_window: window,
        averaged,
        diagnostics: diag,
        tag: RunTag {
            omega0: model.omega0,
            omega1: model.omega1,
            pulse: program.map(|p| p.params),
            bath: if config.mode == DissipationMode::Off { None } else { tables.map(|t| t.bath) },
            mode: config.mode,
            dt,
        },
    })
}
