//! Microwave pulse families in Rabi units (rad/ns).
//!
//! Every pulse is built on the same truncated Gaussian envelope with unit
//! pi-area. The lab-frame drive is Omega(t) = Omega_x cos(theta) + Omega_y sin(theta),
//! where theta is the accumulated carrier phase.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use libm::erf;

use crate::circuit::ThreeLevelModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseFamily {
    /// Single quadrature, resonant carrier.
    Gaussian,
    /// First-order DRAG quadratures with time-dependent detuning.
    DragDetuned,
    /// Derivative quadrature scaled by alpha, carrier fixed at omega0.
    DragFixedAlpha,
}

impl PulseFamily {
    pub const ALL: [PulseFamily; 3] = [PulseFamily::Gaussian, PulseFamily::DragDetuned, PulseFamily::DragFixedAlpha];

    pub fn name(&self) -> &'static str {
        match self {
            PulseFamily::Gaussian => "gaussian",
            PulseFamily::DragDetuned => "drag_detuned",
            PulseFamily::DragFixedAlpha => "drag_fixed_alpha",
        }
    }
}

impl std::fmt::Display for PulseFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PulseFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(PulseFamily::Gaussian),
            "drag_detuned" => Ok(PulseFamily::DragDetuned),
            "drag_fixed_alpha" => Ok(PulseFamily::DragFixedAlpha),
            other => Err(Error::InvalidPulse(format!("unknown pulse family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    pub family: PulseFamily,
    /// Gate time (ns).
    pub gate_time: f64,
    /// Gaussian width (ns).
    pub sigma: f64,
    /// Derivative weight for `DragFixedAlpha`; `None` selects lambda^2 / 4.
    pub alpha: Option<f64>,
}

impl PulseParams {
    pub fn new(family: PulseFamily, gate_time: f64) -> Self {
        Self { family, gate_time, sigma: 0.5 * gate_time, alpha: None }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gate_time.is_finite() && self.gate_time > 0.0) {
            return Err(Error::InvalidPulse(format!("gate time {} must be positive", self.gate_time)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidPulse(format!("sigma {} must be positive", self.sigma)));
        }
        if let Some(a) = self.alpha {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::InvalidPulse(format!("alpha {a} must be non-negative")));
            }
        }
        Ok(())
    }

    /// alpha actually used by the pulse (zero for families without it).
    pub fn effective_alpha(&self, model: &ThreeLevelModel) -> f64 {
        match self.family {
            PulseFamily::DragFixedAlpha => self.alpha.unwrap_or_else(|| default_alpha(model.lambda)),
            _ => 0.0,
        }
    }
}

/// alpha = lambda^2 / 4.
pub fn default_alpha(lambda: f64) -> f64 {
    lambda * lambda / 4.0
}

/// Omega_pi(t) = A exp(-(t - t_g/2)^2 / 2 sigma^2) - B on [0, t_g], zero outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub amplitude: f64,
    pub offset: f64,
    pub sigma: f64,
    pub gate_time: f64,
}

impl Envelope {
    fn gauss(&self, t: f64) -> f64 {
        let x = t - 0.5 * self.gate_time;
        (-(x * x) / (2.0 * self.sigma * self.sigma)).exp()
    }

    pub fn value(&self, t: f64) -> f64 {
        if !(0.0..=self.gate_time).contains(&t) {
            return 0.0;
        }
        self.amplitude * self.gauss(t) - self.offset
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if !(0.0..=self.gate_time).contains(&t) {
            return 0.0;
        }
        let x = t - 0.5 * self.gate_time;
        -self.amplitude * x / (self.sigma * self.sigma) * self.gauss(t)
    }

    /// Peak Rabi rate A - B at mid-pulse.
    pub fn peak(&self) -> f64 {
        self.amplitude - self.offset
    }

    /// Closed-form area over [0, t_g].
    pub fn area(&self) -> f64 {
        self.amplitude * gaussian_area(self.gate_time, self.sigma) - self.offset * self.gate_time
    }

    /// Closed-form integral of Omega_pi^2 over [0, t].
    pub fn square_integral(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.gate_time);
        let c = 0.5 * self.gate_time;
        let s = self.sigma;
        let partial = |width: f64| {
            // int_0^t exp(-(u - c)^2 / (2 width^2)) du
            width * (PI / 2.0).sqrt() * (erf((t - c) / (2f64.sqrt() * width)) + erf(c / (2f64.sqrt() * width)))
        };
        let a = self.amplitude;
        let b = self.offset;
        a * a * partial(s / 2f64.sqrt()) - 2.0 * a * b * partial(s) + b * b * t
    }
}

/// int_0^{t_g} exp(-(t - t_g/2)^2 / 2 sigma^2) dt.
fn gaussian_area(gate_time: f64, sigma: f64) -> f64 {
    sigma * (2.0 * PI).sqrt() * erf(gate_time / (2.0 * 2f64.sqrt() * sigma))
}

/// Gaussian envelope with zero end points and area pi.
pub fn gaussian_envelope(gate_time: f64, sigma: f64) -> Result<Envelope> {
    if !(gate_time.is_finite() && gate_time > 0.0 && sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidPulse(format!("t_g = {gate_time}, sigma = {sigma}")));
    }
    let c = 0.5 * gate_time;
    let edge = (-(c * c) / (2.0 * sigma * sigma)).exp();
    let denom = gaussian_area(gate_time, sigma) - gate_time * edge;
    if !(denom.is_finite() && denom > 0.0) {
        return Err(Error::DegenerateArea);
    }
    let amplitude = PI / denom;
    Ok(Envelope { amplitude, offset: amplitude * edge, sigma, gate_time })
}

/// d1(t) = (lambda^2 - 4) Omega_pi^2(t) / (4 Delta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detuning {
    pub envelope: Envelope,
    pub coefficient: f64,
}

impl Detuning {
    pub fn value(&self, t: f64) -> f64 {
        let w = self.envelope.value(t);
        self.coefficient * w * w
    }

    /// int_0^t d1(s) ds in closed form.
    pub fn integral(&self, t: f64) -> f64 {
        self.coefficient * self.envelope.square_integral(t)
    }
}

pub fn detuning_profile(envelope: &Envelope, model: &ThreeLevelModel) -> Result<Detuning> {
    if model.anharmonicity == 0.0 {
        return Err(Error::ZeroAnharmonicity);
    }
    let l2 = model.lambda * model.lambda;
    Ok(Detuning { envelope: *envelope, coefficient: (l2 - 4.0) / (4.0 * model.anharmonicity) })
}

/// Omega_x = Omega_pi + cubic * Omega_pi^3, Omega_y = slope * dOmega_pi/dt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadratures {
    pub envelope: Envelope,
    pub cubic: f64,
    pub slope: f64,
}

impl Quadratures {
    pub fn gaussian(envelope: &Envelope) -> Self {
        Self { envelope: *envelope, cubic: 0.0, slope: 0.0 }
    }

    pub fn evaluate(&self, t: f64) -> (f64, f64) {
        let w = self.envelope.value(t);
        let x = w + self.cubic * w * w * w;
        let y = if self.slope == 0.0 { 0.0 } else { self.slope * self.envelope.derivative(t) };
        (x, y)
    }
}

pub fn drag_quadratures(envelope: &Envelope, model: &ThreeLevelModel) -> Result<Quadratures> {
    let delta = model.anharmonicity;
    if delta == 0.0 {
        return Err(Error::ZeroAnharmonicity);
    }
    let l2 = model.lambda * model.lambda;
    Ok(Quadratures { envelope: *envelope, cubic: (l2 - 4.0) / (8.0 * delta * delta), slope: -1.0 / delta })
}

pub fn fixed_alpha_quadratures(envelope: &Envelope, model: &ThreeLevelModel, alpha: f64) -> Result<Quadratures> {
    if model.anharmonicity == 0.0 {
        return Err(Error::ZeroAnharmonicity);
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidPulse(format!("alpha {alpha} must be non-negative")));
    }
    Ok(Quadratures { envelope: *envelope, cubic: 0.0, slope: -alpha / model.anharmonicity })
}

/// Accumulated carrier phase theta(t) = int_0^t [omega0 - d1(s)] ds.
///
/// Tabulated by composite Simpson on a uniform grid over the gate window and
/// interpolated with cubic Hermite polynomials using the exact rate
/// omega0 - d1 at the nodes. After the window the carrier runs at omega0.
#[derive(Debug, Clone)]
pub struct CarrierPhase {
    omega0: f64,
    gate_time: f64,
    step: f64,
    theta: Vec<f64>,
    rate: Vec<f64>,
    resonant: bool,
}

/// Default number of tabulation intervals across the gate window.
pub const CARRIER_INTERVALS: usize = 4096;

pub fn carrier_phase(d1: impl Fn(f64) -> f64, omega0: f64, gate_time: f64, intervals: usize) -> CarrierPhase {
    let n = intervals.max(1);
    let step = gate_time / n as f64;
    let mut theta = Vec::with_capacity(n + 1);
    let mut rate = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    theta.push(0.0);
    rate.push(omega0 - d1(0.0));
    for i in 0..n {
        let a = step * i as f64;
        let b = if i + 1 == n { gate_time } else { step * (i + 1) as f64 };
        let fa = omega0 - d1(a);
        let fm = omega0 - d1(0.5 * (a + b));
        let fb = omega0 - d1(b);
        acc += (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        theta.push(acc);
        rate.push(fb);
    }
    CarrierPhase { omega0, gate_time, step, theta, rate, resonant: false }
}

impl CarrierPhase {
    /// Carrier locked to omega0: theta = omega0 t exactly.
    pub fn resonant(omega0: f64, gate_time: f64) -> Self {
        Self { omega0, gate_time, step: gate_time, theta: vec![0.0, omega0 * gate_time], rate: vec![omega0; 2], resonant: true }
    }

    pub fn value(&self, t: f64) -> f64 {
        if self.resonant || t <= 0.0 {
            return self.omega0 * t;
        }
        if t >= self.gate_time {
            return self.theta[self.theta.len() - 1] + self.omega0 * (t - self.gate_time);
        }
        let x = t / self.step;
        let i = (x.floor() as usize).min(self.theta.len() - 2);
        let s = x - i as f64;
        let h = self.step;
        let (p0, p1) = (self.theta[i], self.theta[i + 1]);
        let (m0, m1) = (self.rate[i] * h, self.rate[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * p0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * p1 + (s3 - s2) * m1
    }

    /// theta at the end of the gate window.
    pub fn final_phase(&self) -> f64 {
        self.value(self.gate_time)
    }
}

/// A fully specified drive: quadratures, carrier and optional detuning.
#[derive(Debug, Clone)]
pub struct PulseProgram {
    pub params: PulseParams,
    pub envelope: Envelope,
    pub quadratures: Quadratures,
    pub detuning: Option<Detuning>,
    pub carrier: CarrierPhase,
    pub alpha: f64,
}

impl PulseProgram {
    pub fn new(params: &PulseParams, model: &ThreeLevelModel) -> Result<Self> {
        params.validate()?;
        let envelope = gaussian_envelope(params.gate_time, params.sigma)?;
        let omega0 = model.omega0;
        let alpha = params.effective_alpha(model);
        let (quadratures, detuning) = match params.family {
            PulseFamily::Gaussian => (Quadratures::gaussian(&envelope), None),
            PulseFamily::DragDetuned => {
                (drag_quadratures(&envelope, model)?, Some(detuning_profile(&envelope, model)?))
            }
            PulseFamily::DragFixedAlpha => (fixed_alpha_quadratures(&envelope, model, alpha)?, None),
        };
        let carrier = match &detuning {
            Some(d) => carrier_phase(|t| d.value(t), omega0, params.gate_time, CARRIER_INTERVALS),
            None => CarrierPhase::resonant(omega0, params.gate_time),
        };
        Ok(Self { params: *params, envelope, quadratures, detuning, carrier, alpha })
    }

    pub fn gate_time(&self) -> f64 {
        self.params.gate_time
    }

    pub fn family(&self) -> PulseFamily {
        self.params.family
    }

    pub fn detuning_at(&self, t: f64) -> f64 {
        self.detuning.as_ref().map_or(0.0, |d| d.value(t))
    }

    pub fn phase(&self, t: f64) -> f64 {
        self.carrier.value(t)
    }

    /// Lab-frame scalar drive; errors outside [0, t_g].
    pub fn lab_frame_drive(&self, t: f64) -> Result<f64> {
        let tg = self.gate_time();
        if !(0.0..=tg).contains(&t) {
            return Err(Error::OutOfWindow { t, gate_time: tg });
        }
        Ok(self.drive(t))
    }

    /// Lab-frame scalar drive, identically zero outside the window.
    pub fn drive(&self, t: f64) -> f64 {
        if !(0.0..=self.gate_time()).contains(&t) {
            return 0.0;
        }
        let (x, y) = self.quadratures.evaluate(t);
        let theta = self.carrier.value(t);
        if y == 0.0 {
            x * theta.cos()
        } else {
            let (s, c) = theta.sin_cos();
            x * c + y * s
        }
    }

    /// CSV of (t, Omega_x, Omega_y, theta, d1) on `samples` evenly spaced points.
    pub fn to_csv(&self, samples: usize) -> String {
        let mut out = String::from("t,omega_x,omega_y,theta,d1\n");
        let n = samples.max(2);
        for i in 0..n {
            let t = self.gate_time() * i as f64 / (n - 1) as f64;
            let (x, y) = self.quadratures.evaluate(t);
            out.push_str(&format!(
                "{t:.10e},{x:.10e},{y:.10e},{:.10e},{:.10e}\n",
                self.phase(t),
                self.detuning_at(t)
            ));
        }
        out
    }
}
