//! TOML run configuration.
//!
//! Every section is optional and falls back to the reference setup
//! (C = 1 pF, I0 = 1.5 uA, beta_L = 3.2, f = 0.955, sigma = t_g/2,
//! omega_s = 20 omega0). A `[sweep]` section, when present, must name its axis.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bath::{golden_rule_gamma, BathSpec, DEFAULT_CUTOFF_RATIO};
use crate::circuit::{CircuitParams, PhaseGrid, SpectrumSettings, ThreeLevelModel};
use crate::error::{Error, Result};
use crate::propagator::DissipationMode;
use crate::pulses::{PulseFamily, PulseParams};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    circuit: Option<RawCircuit>,
    bath: Option<RawBath>,
    pulse: Option<RawPulse>,
    numerics: Option<RawNumerics>,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCircuit {
    capacitance: Option<f64>,
    critical_current: Option<f64>,
    beta_l: Option<f64>,
    flux_fraction: Option<f64>,
    grid_points: Option<usize>,
    levels: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBath {
    xi: Option<f64>,
    xi_reference_t1_ns: Option<f64>,
    omega_s_over_omega0: Option<f64>,
    temperature_over_hbar_omega0: Option<f64>,
    counterterm: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPulse {
    family: Option<String>,
    tg_omega0: Option<f64>,
    sigma_ratio: Option<f64>,
    alpha: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNumerics {
    dt_override: Option<f64>,
    record_stride: Option<usize>,
    dissipation_mode: Option<String>,
    memory_ns: Option<f64>,
    t_end_ns: Option<f64>,
    fit_start_ns: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: Option<String>,
    start: Option<f64>,
    stop: Option<f64>,
    points: Option<usize>,
    families: Option<Vec<String>>,
    modes: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CircuitConfig {
    pub params: CircuitParams,
    pub grid_points: usize,
    pub levels: usize,
}

impl CircuitConfig {
    pub fn spectrum_settings(&self) -> SpectrumSettings {
        SpectrumSettings { grid_points: self.grid_points, levels: self.levels, ..SpectrumSettings::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BathConfig {
    /// Coupling as written in the config.
    pub xi: f64,
    /// When set, `xi` is expressed in units where xi = 2 gives this T1 (ns).
    pub xi_reference_t1_ns: Option<f64>,
    pub omega_s_over_omega0: f64,
    pub temperature_over_hbar_omega0: f64,
    pub counterterm: bool,
}

impl BathConfig {
    /// Coupling that multiplies the spectral density.
    pub fn literal_xi(&self, model: &ThreeLevelModel) -> Result<f64> {
        self.literal_xi_for(self.xi, model)
    }

    pub fn literal_xi_for(&self, xi: f64, model: &ThreeLevelModel) -> Result<f64> {
        match self.xi_reference_t1_ns {
            None => Ok(xi),
            Some(t1) => Ok(0.5 * xi * calibrate_xi(model, self.omega_s_over_omega0, t1)?),
        }
    }

    pub fn spec(&self, model: &ThreeLevelModel) -> Result<BathSpec> {
        self.spec_at(self.literal_xi(model)?, self.temperature_over_hbar_omega0, model)
    }

    /// Bath with an explicit literal coupling and temperature (in hbar omega0).
    pub fn spec_at(&self, literal_xi: f64, temperature_ratio: f64, model: &ThreeLevelModel) -> Result<BathSpec> {
        let mut spec = BathSpec::in_model_units(literal_xi, self.omega_s_over_omega0, temperature_ratio, model)?;
        spec.counterterm = self.counterterm;
        Ok(spec)
    }
}

/// Literal coupling giving golden-rule lifetime `target_t1_ns`.
pub fn calibrate_xi(model: &ThreeLevelModel, cutoff_ratio: f64, target_t1_ns: f64) -> Result<f64> {
    if !(target_t1_ns > 0.0 && target_t1_ns.is_finite()) {
        return Err(Error::Validation(format!("target T1 = {target_t1_ns} must be positive")));
    }
    let unit = BathSpec::in_model_units(1.0, cutoff_ratio, 0.0, model)?;
    let gamma = golden_rule_gamma(model, &unit);
    if gamma <= 0.0 {
        return Err(Error::Validation("golden-rule rate vanishes for this model".into()));
    }
    Ok(1.0 / (gamma * target_t1_ns))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PulseConfig {
    pub family: PulseFamily,
    pub tg_omega0: f64,
    pub sigma_ratio: f64,
    pub alpha: Option<f64>,
}

impl PulseConfig {
    pub fn params(&self, family: PulseFamily, tg_omega0: f64, model: &ThreeLevelModel) -> PulseParams {
        let gate_time = tg_omega0 / model.omega0;
        let mut p = PulseParams::new(family, gate_time).with_sigma(self.sigma_ratio * gate_time);
        if let Some(a) = self.alpha {
            p = p.with_alpha(a);
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NumericsConfig {
    pub dt_override: Option<f64>,
    pub record_stride: usize,
    pub dissipation_mode: DissipationMode,
    /// Longest kernel memory kept in tables (ns); beyond it the plateau is used.
    pub memory_ns: f64,
    /// Length of free-relaxation runs (ns).
    pub t_end_ns: f64,
    /// Start of the exponential-fit window for relaxation runs (ns).
    pub fit_start_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    GateTime,
    Alpha,
    Temperature,
    Xi,
}

impl SweepAxis {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "gate_time" => Ok(SweepAxis::GateTime),
            "alpha" => Ok(SweepAxis::Alpha),
            "temperature" => Ok(SweepAxis::Temperature),
            "xi" => Ok(SweepAxis::Xi),
            other => Err(Error::Validation(format!(
                "sweep.axis: unknown axis '{other}' (expected gate_time, alpha, temperature or xi)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::GateTime => "gate_time",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Temperature => "temperature",
            SweepAxis::Xi => "xi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub families: Vec<PulseFamily>,
    pub modes: Vec<DissipationMode>,
}

impl SweepSpec {
    /// Evenly spaced axis values, ascending.
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        (0..self.points)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / (self.points - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub circuit: CircuitConfig,
    pub bath: BathConfig,
    pub pulse: PulseConfig,
    pub numerics: NumericsConfig,
    pub sweep: Option<SweepSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("empty config is valid")
    }
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Validation(format!("{key}: {msg}"))
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be finite and >= 0, got {v}")))
    }
}

/// Parse and validate configuration text, applying defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))?;

    let c = raw.circuit.unwrap_or_default();
    let reference = CircuitParams::reference();
    let params = CircuitParams {
        capacitance: c.capacitance.unwrap_or(reference.capacitance),
        critical_current: c.critical_current.unwrap_or(reference.critical_current),
        beta_l: c.beta_l.unwrap_or(reference.beta_l),
        flux_fraction: c.flux_fraction.unwrap_or(reference.flux_fraction),
    };
    params.validate()?;
    let defaults = SpectrumSettings::default();
    let grid_points = c.grid_points.unwrap_or(defaults.grid_points);
    if grid_points < PhaseGrid::MIN_POINTS {
        return Err(invalid("circuit.grid_points", format!("must be >= {}", PhaseGrid::MIN_POINTS)));
    }
    let levels = c.levels.unwrap_or(defaults.levels);
    if !(3..=200).contains(&levels) {
        return Err(invalid("circuit.levels", "must lie in 3..=200"));
    }
    let circuit = CircuitConfig { params, grid_points, levels };

    let b = raw.bath.unwrap_or_default();
    let bath = BathConfig {
        xi: non_negative("bath.xi", b.xi.unwrap_or(0.0))?,
        xi_reference_t1_ns: b.xi_reference_t1_ns.map(|v| positive("bath.xi_reference_t1_ns", v)).transpose()?,
        omega_s_over_omega0: positive("bath.omega_s_over_omega0", b.omega_s_over_omega0.unwrap_or(DEFAULT_CUTOFF_RATIO))?,
        temperature_over_hbar_omega0: non_negative(
            "bath.temperature_over_hbar_omega0",
            b.temperature_over_hbar_omega0.unwrap_or(0.0),
        )?,
        counterterm: b.counterterm.unwrap_or(true),
    };

    let p = raw.pulse.unwrap_or_default();
    let family = match p.family {
        Some(s) => s.parse::<PulseFamily>().map_err(|e| invalid("pulse.family", e))?,
        None => PulseFamily::DragDetuned,
    };
    let pulse = PulseConfig {
        family,
        tg_omega0: positive("pulse.tg_omega0", p.tg_omega0.unwrap_or(250.0))?,
        sigma_ratio: positive("pulse.sigma_ratio", p.sigma_ratio.unwrap_or(0.5))?,
        alpha: match p.alpha {
            Some(a) if !a.is_finite() => return Err(invalid("pulse.alpha", "must be finite")),
            other => other,
        },
    };

    let n = raw.numerics.unwrap_or_default();
    let dissipation_mode = match n.dissipation_mode {
        Some(s) => s.parse::<DissipationMode>().map_err(|e| invalid("numerics.dissipation_mode", e))?,
        None => DissipationMode::Off,
    };
    let numerics = NumericsConfig {
        dt_override: n.dt_override.map(|v| positive("numerics.dt_override", v)).transpose()?,
        record_stride: match n.record_stride.unwrap_or(100) {
            0 => return Err(invalid("numerics.record_stride", "must be positive")),
            s => s,
        },
        dissipation_mode,
        memory_ns: positive("numerics.memory_ns", n.memory_ns.unwrap_or(20.0))?,
        t_end_ns: positive("numerics.t_end_ns", n.t_end_ns.unwrap_or(400.0))?,
        fit_start_ns: non_negative("numerics.fit_start_ns", n.fit_start_ns.unwrap_or(50.0))?,
    };
    if numerics.fit_start_ns >= numerics.t_end_ns {
        return Err(invalid("numerics.fit_start_ns", "must be before t_end_ns"));
    }

    let sweep = match raw.sweep {
        None => None,
        Some(s) => Some(parse_sweep(s, &pulse, &numerics)?),
    };

    Ok(RunConfig { circuit, bath, pulse, numerics, sweep })
}

fn parse_sweep(s: RawSweep, pulse: &PulseConfig, numerics: &NumericsConfig) -> Result<SweepSpec> {
    let axis = SweepAxis::parse(&s.axis.ok_or_else(|| Error::Validation("sweep axis required".into()))?)?;
    let start = s.start.ok_or_else(|| invalid("sweep.start", "required"))?;
    let stop = s.stop.ok_or_else(|| invalid("sweep.stop", "required"))?;
    if !(start.is_finite() && stop.is_finite()) || start > stop {
        return Err(invalid("sweep", format!("range [{start}, {stop}] must be finite and ordered")));
    }
    let points = s.points.ok_or_else(|| invalid("sweep.points", "required"))?;
    if points == 0 || (points == 1 && start != stop) {
        return Err(invalid("sweep.points", "must be >= 2 for a non-degenerate range"));
    }
    match axis {
        SweepAxis::GateTime if start <= 0.0 => return Err(invalid("sweep.start", "gate times must be positive")),
        SweepAxis::Temperature | SweepAxis::Xi if start < 0.0 => {
            return Err(invalid("sweep.start", "must be >= 0 on this axis"))
        }
        _ => {}
    }
    let families = match s.families {
        Some(list) if list.is_empty() => return Err(invalid("sweep.families", "must not be empty")),
        Some(list) => list
            .iter()
            .map(|f| f.parse::<PulseFamily>().map_err(|e| invalid("sweep.families", e)))
            .collect::<Result<Vec<_>>>()?,
        None => vec![pulse.family],
    };
    let modes = match s.modes {
        Some(list) if list.is_empty() => return Err(invalid("sweep.modes", "must not be empty")),
        Some(list) => list
            .iter()
            .map(|m| m.parse::<DissipationMode>().map_err(|e| invalid("sweep.modes", e)))
            .collect::<Result<Vec<_>>>()?,
        None => vec![numerics.dissipation_mode],
    };
    Ok(SweepSpec { axis, start, stop, points, families, modes })
}

impl RunConfig {
    /// Canonical JSON echo of the fully resolved configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }

    pub fn sweep_for(&self, axis: SweepAxis) -> Result<&SweepSpec> {
        let sweep = self.sweep.as_ref().ok_or_else(|| Error::Validation("sweep axis required".into()))?;
        if sweep.axis != axis {
            return Err(Error::Validation(format!(
                "sweep.axis is '{}' but this command sweeps '{}'",
                sweep.axis.name(),
                axis.name()
            )));
        }
        Ok(sweep)
    }
}
