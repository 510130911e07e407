//! Sweep orchestration: gate-error sweeps over gate time, alpha, temperature
//! and coupling, free relaxation runs, and CSV emission.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::bath::{build_kernel_tables, golden_rule_gamma, BathSpec, KernelTables};
use crate::circuit::{analyze_circuit, CircuitAnalysis, ThreeLevelModel};
use crate::config::{RunConfig, SweepAxis};
use crate::error::{Error, Result};
use crate::metrics::{gate_fidelity, rate_equation_error, GateResult, RateEstimate};
use crate::propagator::{evolve, max_step, DensityMatrix, DissipationMode, SimulationConfig, Trajectory};
use crate::pulses::{PulseFamily, PulseParams, PulseProgram};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CSV_COLUMNS: [&str; 15] = [
    "family",
    "tg_omega0",
    "alpha",
    "xi",
    "T_over_hbar_omega0",
    "dissipation",
    "F_g",
    "E",
    "leakage",
    "rho_bar_00",
    "rho_bar_11",
    "E_rate",
    "ratio_simple",
    "ratio_numeric",
    "status",
];

/// Circuit analysis shared by every point of a run.
pub struct Setup {
    pub config: RunConfig,
    pub analysis: CircuitAnalysis,
}

impl Setup {
    pub fn new(config: RunConfig) -> Result<Self> {
        let analysis = analyze_circuit(&config.circuit.params, &config.circuit.spectrum_settings())?;
        Ok(Self { config, analysis })
    }

    pub fn model(&self) -> &ThreeLevelModel {
        &self.analysis.model
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct TableKey {
    dt: u64,
    t_max: u64,
    xi: u64,
    omega_s: u64,
    temperature: u64,
    counterterm: bool,
}

impl TableKey {
    fn new(bath: &BathSpec, dt: f64, t_max: f64) -> Self {
        Self {
            dt: dt.to_bits(),
            t_max: t_max.to_bits(),
            xi: bath.xi.to_bits(),
            omega_s: bath.omega_s.to_bits(),
            temperature: bath.temperature.to_bits(),
            counterterm: bath.counterterm,
        }
    }
}

type TableSlot = Arc<OnceLock<std::result::Result<Arc<KernelTables>, Error>>>;

/// Kernel tables shared across the points of a sweep; each distinct
/// (bath, step, range) is built once even when requested concurrently.
#[derive(Default)]
pub struct TableCache {
    slots: Mutex<HashMap<TableKey, TableSlot>>,
}

impl TableCache {
    pub fn get(&self, model: &ThreeLevelModel, bath: &BathSpec, dt: f64, t_max: f64) -> Result<Arc<KernelTables>> {
        let slot = {
            let mut slots = self.slots.lock().expect("table cache poisoned");
            slots.entry(TableKey::new(bath, dt, t_max)).or_default().clone()
        };
        slot.get_or_init(|| build_kernel_tables(model, bath, dt, t_max).map(Arc::new)).clone()
    }
}

/// Step that lands exactly on `t_end`, no larger than `target`.
fn fitted_step(t_end: f64, target: f64) -> f64 {
    let steps = (t_end / target - 1e-9).ceil().max(1.0);
    t_end / steps
}

/// Numerical settings for one gate point.
#[derive(Debug, Clone, Copy)]
pub struct GateNumerics {
    pub dt: Option<f64>,
    pub record_stride: usize,
    pub memory_ns: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GateOutcome {
    /// Fidelity in the requested dissipation mode.
    pub result: GateResult,
    /// Dissipationless run of the same pulse (source of the population averages).
    pub coherent: GateResult,
    pub rate: RateEstimate,
    pub gamma: f64,
}

fn gate_pair(
    model: &ThreeLevelModel,
    program: &PulseProgram,
    tables: Option<&KernelTables>,
    config: &SimulationConfig,
) -> Result<(Trajectory, Trajectory)> {
    let a = evolve(&DensityMatrix::pure(0), model, Some(program), tables, config)?;
    let b = evolve(&DensityMatrix::pure(1), model, Some(program), tables, config)?;
    Ok((a, b))
}

/// Simulate one pulse from |0> and |1> and evaluate the NOT-gate fidelity.
pub fn run_gate_point(
    model: &ThreeLevelModel,
    pulse: &PulseParams,
    bath: &BathSpec,
    mode: DissipationMode,
    numerics: &GateNumerics,
    cache: &TableCache,
) -> Result<GateOutcome> {
    let program = PulseProgram::new(pulse, model)?;
    let tg = pulse.gate_time;
    let dt = fitted_step(tg, numerics.dt.unwrap_or_else(|| max_step(model, bath.omega_s)));
    let sim = SimulationConfig { dt, record_stride: numerics.record_stride, t_end: tg, mode: DissipationMode::Off };
    let theta = program.carrier.final_phase();

    let (a, b) = gate_pair(model, &program, None, &sim)?;
    let coherent = gate_fidelity(&a, &b, tg, theta, model)?;
    let result = match mode {
        DissipationMode::Off => coherent,
        DissipationMode::Full | DissipationMode::Markov => {
            bath.validate_for(model)?;
            let t_max = if mode == DissipationMode::Full { tg } else { numerics.memory_ns.max(tg) };
            let tables = cache.get(model, bath, dt, t_max)?;
            let (a, b) = gate_pair(model, &program, Some(&tables), &SimulationConfig { mode, ..sim })?;
            gate_fidelity(&a, &b, tg, theta, model)?
        }
    };
    let gamma = golden_rule_gamma(model, bath);
    let rate = rate_equation_error(gamma, tg, model, bath.temperature, coherent.rho_bar_00, coherent.rho_bar_11)?;
    Ok(GateOutcome { result, coherent, rate, gamma })
}

/// One CSV row; failed points keep their coordinates and carry the error.
#[derive(Debug, Clone)]
pub struct GateRow {
    pub family: PulseFamily,
    pub tg_omega0: f64,
    pub alpha: Option<f64>,
    pub xi: f64,
    pub temperature_ratio: f64,
    pub mode: DissipationMode,
    pub outcome: std::result::Result<GateOutcome, Error>,
    pub ratio_numeric: Option<f64>,
}

impl GateRow {
    pub fn error(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|o| o.result.error)
    }

    fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
        let head = format!(
            "{},{},{},{},{},{}",
            self.family,
            self.tg_omega0,
            self.alpha.map(|a| format!("{a}")).unwrap_or_default(),
            format_args!("{:.10e}", self.xi),
            self.temperature_ratio,
            self.mode
        );
        match &self.outcome {
            Ok(o) => format!(
                "{head},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},ok",
                o.result.fidelity,
                o.result.error,
                o.result.leakage,
                o.coherent.rho_bar_00,
                o.coherent.rho_bar_11,
                o.rate.e_rate,
                o.rate.ratio_simple,
                opt(self.ratio_numeric)
            ),
            Err(e) => {
                let msg = e.to_string().replace([',', '\n'], ";");
                format!("{head},,,,,,,,,error: {msg}")
            }
        }
    }
}

/// Rows of one sweep plus provenance.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub command: String,
    pub axis: SweepAxis,
    pub config_json: String,
    pub config_hash: String,
    pub wall_time_s: f64,
    pub rows: Vec<GateRow>,
    /// Human-readable findings (argmin, fitted values, ...).
    pub summary: Vec<String>,
}

impl SweepRecord {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = header_block(&self.command, &self.config_json, &self.config_hash, self.wall_time_s);
        for line in &self.summary {
            out.push_str(&format!("# {line}\n"));
        }
        out.push_str(&CSV_COLUMNS.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    /// Write `<out>/<command>_<hash>.csv` and return its path.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        write_output(out_dir, &self.command, &self.config_hash, &self.to_csv())
    }
}

pub fn header_block(command: &str, config_json: &str, hash: &str, wall_time_s: f64) -> String {
    format!(
        "# command = {command}\n# code_version = {CODE_VERSION}\n# config_hash = {hash}\n# config = {config_json}\n# wall_time_s = {wall_time_s:.3}\n"
    )
}

pub fn write_output(out_dir: &Path, stem: &str, hash: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{stem}_{}.csv", &hash[..12.min(hash.len())]));
    std::fs::write(&path, contents)?;
    Ok(path)
}

/// Map `f` over `items` on a pool of `workers` threads, keeping input order.
pub fn ordered_parallel_map<T: Sync, R: Send>(workers: usize, items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().expect("thread pool");
    pool.install(|| items.par_iter().map(&f).collect())
}

#[derive(Debug, Clone, Copy)]
struct Point {
    family: PulseFamily,
    mode: DissipationMode,
    tg_omega0: f64,
    alpha: Option<f64>,
    xi: f64,
    temperature: f64,
}

fn gate_numerics(cfg: &RunConfig) -> GateNumerics {
    GateNumerics {
        dt: cfg.numerics.dt_override,
        record_stride: cfg.numerics.record_stride,
        memory_ns: cfg.numerics.memory_ns,
    }
}

fn run_points(setup: &Setup, points: &[Point], workers: usize) -> Vec<GateRow> {
    let cfg = &setup.config;
    let model = setup.model();
    let cache = TableCache::default();
    let numerics = gate_numerics(cfg);
    ordered_parallel_map(workers, points, |p| {
        let outcome = (|| {
            let literal = cfg.bath.literal_xi_for(p.xi, model)?;
            let bath = cfg.bath.spec_at(literal, p.temperature, model)?;
            let mut pulse = cfg.pulse.params(p.family, p.tg_omega0, model);
            if let Some(a) = p.alpha {
                pulse = pulse.with_alpha(a);
            }
            run_gate_point(model, &pulse, &bath, p.mode, &numerics, &cache)
        })();
        let alpha = match p.family {
            PulseFamily::DragFixedAlpha => Some(p.alpha.or(cfg.pulse.alpha).unwrap_or_else(|| model.lambda.powi(2) / 4.0)),
            _ => None,
        };
        GateRow {
            family: p.family,
            tg_omega0: p.tg_omega0,
            alpha,
            xi: p.xi,
            temperature_ratio: p.temperature,
            mode: p.mode,
            outcome,
            ratio_numeric: None,
        }
    })
}

fn record(setup: &Setup, command: &str, axis: SweepAxis, rows: Vec<GateRow>, summary: Vec<String>, start: Instant) -> SweepRecord {
    SweepRecord {
        command: command.to_string(),
        axis,
        config_json: setup.config.canonical_json(),
        config_hash: setup.config.hash(),
        wall_time_s: start.elapsed().as_secs_f64(),
        rows,
        summary,
    }
}

fn base_point(setup: &Setup, family: PulseFamily, mode: DissipationMode) -> Point {
    let cfg = &setup.config;
    Point {
        family,
        mode,
        tg_omega0: cfg.pulse.tg_omega0,
        alpha: None,
        xi: cfg.bath.xi,
        temperature: cfg.bath.temperature_over_hbar_omega0,
    }
}

/// Error of the fixed-frequency two-quadrature pulse as a function of alpha.
pub fn run_alpha_sweep(setup: &Setup, workers: usize) -> Result<SweepRecord> {
    let start = Instant::now();
    let sweep = setup.config.sweep_for(SweepAxis::Alpha)?;
    let mut points = Vec::new();
    for &mode in &sweep.modes {
        for &alpha in &sweep.values() {
            points.push(Point { alpha: Some(alpha), ..base_point(setup, PulseFamily::DragFixedAlpha, mode) });
        }
    }
    let rows = run_points(setup, &points, workers);
    let mut summary = Vec::new();
    for &mode in &sweep.modes {
        let best = rows
            .iter()
            .filter(|r| r.mode == mode)
            .filter_map(|r| r.error().map(|e| (r.alpha.unwrap_or(f64::NAN), e)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((alpha, e)) = best {
            summary.push(format!("argmin[{mode}] alpha = {alpha} (E = {e:.4e})"));
        }
    }
    Ok(record(setup, "alpha-sweep", SweepAxis::Alpha, rows, summary, start))
}

/// Error versus gate time for each requested family and dissipation mode.
pub fn run_gate_time_sweep(setup: &Setup, workers: usize) -> Result<SweepRecord> {
    let start = Instant::now();
    let sweep = setup.config.sweep_for(SweepAxis::GateTime)?;
    let mut points = Vec::new();
    for &family in &sweep.families {
        for &mode in &sweep.modes {
            for &tg in &sweep.values() {
                points.push(Point { tg_omega0: tg, ..base_point(setup, family, mode) });
            }
        }
    }
    let rows = run_points(setup, &points, workers);
    let mut summary = Vec::new();
    for &family in &sweep.families {
        for &mode in &sweep.modes {
            let curve: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.family == family && r.mode == mode)
                .filter_map(|r| r.error().map(|e| (r.tg_omega0, e)))
                .collect();
            if let Some(&(tg, e)) = curve.iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
                let interior = curve.first().map(|f| f.0) != Some(tg) && curve.last().map(|l| l.0) != Some(tg);
                summary.push(format!(
                    "min[{family}/{mode}] tg_omega0 = {tg} (E = {e:.4e}, {})",
                    if interior { "interior" } else { "at boundary" }
                ));
            }
        }
    }
    Ok(record(setup, "gate-sweep", SweepAxis::GateTime, rows, summary, start))
}

/// Error versus temperature, normalized by the zero-temperature error.
pub fn run_temperature_sweep(setup: &Setup, workers: usize) -> Result<SweepRecord> {
    let start = Instant::now();
    let sweep = setup.config.sweep_for(SweepAxis::Temperature)?;
    let values = sweep.values();
    let mut points = Vec::new();
    for &family in &sweep.families {
        for &mode in &sweep.modes {
            // The normalization point is always simulated; it is dropped from
            // the output when it is not itself part of the sweep.
            if values[0] != 0.0 {
                points.push(Point { temperature: 0.0, ..base_point(setup, family, mode) });
            }
            for &t in &values {
                points.push(Point { temperature: t, ..base_point(setup, family, mode) });
            }
        }
    }
    let mut rows = run_points(setup, &points, workers);
    let mut baseline: HashMap<(PulseFamily, DissipationMode), f64> = HashMap::new();
    for r in &rows {
        if r.temperature_ratio == 0.0 {
            if let Some(e) = r.error() {
                baseline.insert((r.family, r.mode), e);
            }
        }
    }
    for r in &mut rows {
        r.ratio_numeric = match (r.error(), baseline.get(&(r.family, r.mode))) {
            (Some(e), Some(&e0)) if e0 > 0.0 => Some(e / e0),
            _ => None,
        };
    }
    if values[0] != 0.0 {
        let per_curve = values.len() + 1;
        rows = rows.into_iter().enumerate().filter(|(i, _)| i % per_curve != 0).map(|(_, r)| r).collect();
    }
    let mut summary = Vec::new();
    for &family in &sweep.families {
        for &mode in &sweep.modes {
            let ratios: Vec<f64> = rows
                .iter()
                .filter(|r| r.family == family && r.mode == mode)
                .filter_map(|r| r.ratio_numeric)
                .collect();
            let monotone = ratios.windows(2).all(|w| w[1] >= w[0]);
            summary.push(format!("monotone[{family}/{mode}] = {monotone}"));
        }
    }
    Ok(record(setup, "temp-sweep", SweepAxis::Temperature, rows, summary, start))
}

/// Error versus coupling strength.
pub fn run_xi_sweep(setup: &Setup, workers: usize) -> Result<SweepRecord> {
    let start = Instant::now();
    let sweep = setup.config.sweep_for(SweepAxis::Xi)?;
    let mut points = Vec::new();
    for &family in &sweep.families {
        for &mode in &sweep.modes {
            for &xi in &sweep.values() {
                points.push(Point { xi, ..base_point(setup, family, mode) });
            }
        }
    }
    let rows = run_points(setup, &points, workers);
    Ok(record(setup, "xi-sweep", SweepAxis::Xi, rows, Vec::new(), start))
}

/// Free decay from |1> with no drive.
#[derive(Debug, Clone)]
pub struct RelaxationRecord {
    pub trajectory: Trajectory,
    pub bath: BathSpec,
    pub gamma: f64,
    /// Fitted decay rate of rho_11 (1/ns); zero for a flat trajectory.
    pub fitted_rate: f64,
    pub config_json: String,
    pub config_hash: String,
    pub wall_time_s: f64,
}

impl RelaxationRecord {
    pub fn fitted_t1(&self) -> f64 {
        if self.fitted_rate > 0.0 {
            1.0 / self.fitted_rate
        } else {
            f64::INFINITY
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = header_block("relax", &self.config_json, &self.config_hash, self.wall_time_s);
        out.push_str(&format!("# golden_rule_gamma_per_ns = {:.10e}\n", self.gamma));
        out.push_str(&format!("# fitted_rate_per_ns = {:.10e}\n", self.fitted_rate));
        out.push_str(&format!("# fitted_t1_ns = {:.6e}\n", self.fitted_t1()));
        out.push_str(&self.trajectory.to_csv());
        out
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        write_output(out_dir, "relax", &self.config_hash, &self.to_csv())
    }
}

/// Least-squares slope of ln rho_11 over samples with t >= `from`, negated.
pub fn fit_decay_rate(trajectory: &Trajectory, from: f64) -> f64 {
    let pts: Vec<(f64, f64)> = trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .filter(|(t, s)| **t >= from && s[(1, 1)].re > 0.0)
        .map(|(t, s)| (*t, s[(1, 1)].re.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + (p.0 - mx) * (p.1 - my), b + (p.0 - mx).powi(2)));
    -sxy / sxx
}

pub fn run_relaxation(setup: &Setup) -> Result<RelaxationRecord> {
    let start = Instant::now();
    let cfg = &setup.config;
    let model = setup.model();
    let bath = cfg.bath.spec(model)?;
    let mode = cfg.numerics.dissipation_mode;
    let t_end = cfg.numerics.t_end_ns;
    let dt = fitted_step(t_end, cfg.numerics.dt_override.unwrap_or_else(|| max_step(model, bath.omega_s)));
    let sim = SimulationConfig { dt, record_stride: cfg.numerics.record_stride, t_end, mode };
    let tables = match mode {
        DissipationMode::Off => None,
        _ => {
            bath.validate_for(model)?;
            Some(build_kernel_tables(model, &bath, dt, t_end.min(cfg.numerics.memory_ns))?)
        }
    };
    let trajectory = evolve(&DensityMatrix::pure(1), model, None, tables.as_ref(), &sim)?;
    let fitted_rate = fit_decay_rate(&trajectory, cfg.numerics.fit_start_ns);
    Ok(RelaxationRecord {
        gamma: golden_rule_gamma(model, &bath),
        fitted_rate,
        bath,
        trajectory,
        config_json: cfg.canonical_json(),
        config_hash: cfg.hash(),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
