#![allow(dead_code)]

use std::sync::OnceLock;

use phasequbit::bath::{build_kernel_tables, golden_rule_gamma, BathSpec, KernelTables};
use phasequbit::circuit::{analyze_circuit, CircuitAnalysis, CircuitParams, SpectrumSettings, ThreeLevelModel};
use phasequbit::metrics::{gate_fidelity, GateResult};
use phasequbit::propagator::{evolve, DensityMatrix, DissipationMode, SimulationConfig, Trajectory};
use phasequbit::pulses::{PulseParams, PulseProgram};

pub fn analysis() -> &'static CircuitAnalysis {
    static A: OnceLock<CircuitAnalysis> = OnceLock::new();
    A.get_or_init(|| analyze_circuit(&CircuitParams::reference(), &SpectrumSettings::default()).unwrap())
}

pub fn model() -> &'static ThreeLevelModel {
    &analysis().model
}

/// Literal coupling giving T1 = 700 ns at omega_s = 20 omega0.
pub fn xi_700() -> f64 {
    let unit = BathSpec::in_model_units(1.0, 20.0, 0.0, model()).unwrap();
    1.0 / (golden_rule_gamma(model(), &unit) * 700.0)
}

pub fn bath(xi: f64, cutoff_ratio: f64, temperature_ratio: f64) -> BathSpec {
    BathSpec::in_model_units(xi, cutoff_ratio, temperature_ratio, model()).unwrap()
}

pub fn pulse(family: phasequbit::pulses::PulseFamily, tg_omega0: f64) -> PulseParams {
    PulseParams::new(family, tg_omega0 / model().omega0)
}

pub struct GateRun {
    pub result: GateResult,
    pub from0: Trajectory,
    pub from1: Trajectory,
}

/// Gate pair with a step refined by `refine` relative to the default.
pub fn run_gate(
    m: &ThreeLevelModel,
    params: &PulseParams,
    bath: &BathSpec,
    mode: DissipationMode,
    refine: usize,
) -> GateRun {
    let program = PulseProgram::new(params, m).unwrap();
    let mut cfg = SimulationConfig::fitted(m, bath.omega_s, params.gate_time, mode);
    cfg.dt /= refine as f64;
    cfg.record_stride *= refine;
    let tables = match mode {
        DissipationMode::Off => None,
        DissipationMode::Full => Some(build_kernel_tables(m, bath, cfg.dt, params.gate_time).unwrap()),
        DissipationMode::Markov => Some(build_kernel_tables(m, bath, cfg.dt, params.gate_time.max(20.0)).unwrap()),
    };
    let from0 = evolve(&DensityMatrix::pure(0), m, Some(&program), tables.as_ref(), &cfg).unwrap();
    let from1 = evolve(&DensityMatrix::pure(1), m, Some(&program), tables.as_ref(), &cfg).unwrap();
    let result = gate_fidelity(&from0, &from1, params.gate_time, program.carrier.final_phase(), m).unwrap();
    GateRun { result, from0, from1 }
}

pub fn tables(bath: &BathSpec, t_max: f64) -> (KernelTables, SimulationConfig) {
    let cfg = SimulationConfig::fitted(model(), bath.omega_s, t_max, DissipationMode::Full);
    (build_kernel_tables(model(), bath, cfg.dt, t_max).unwrap(), cfg)
}

pub fn max_entry_diff(a: &Trajectory, b: &Trajectory) -> f64 {
    let mut worst: f64 = 0.0;
    for (t, s) in a.times.iter().zip(&a.states) {
        let other = b.state_at(*t);
        worst = worst.max((s - other).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    worst
}
