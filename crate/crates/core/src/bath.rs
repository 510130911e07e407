//! Ohmic Caldeira-Leggett environment: spectral density, memory kernels and
//! the frequency-resolved kernel integrals consumed by the dissipator.
//!
//! Kernels are divided by hbar^2 throughout, so with hbar = 1 they carry units
//! of rad/ns^2 and their time integrals are rates.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::ThreeLevelModel;
use crate::error::{Error, Result};
use crate::quadrature::integrate_with_breaks;
use crate::special::trigamma;

/// Default cutoff in units of omega0.
pub const DEFAULT_CUTOFF_RATIO: f64 = 20.0;

/// Relative change over the last tenth of a table below which the table is
/// considered to have reached its long-time plateau.
pub const PLATEAU_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    /// Dimensionless coupling.
    pub xi: f64,
    /// Cutoff frequency (rad/ns).
    pub omega_s: f64,
    /// Temperature as an angular frequency T/hbar (rad/ns).
    pub temperature: f64,
    /// Subtract the bath-induced potential renormalization, so that only the
    /// physical (frequency-dependent) part of the eta2 integral remains.
    pub counterterm: bool,
}

impl BathSpec {
    pub fn new(xi: f64, omega_s: f64, temperature: f64) -> Result<Self> {
        let spec = Self { xi, omega_s, temperature, counterterm: true };
        spec.validate()?;
        Ok(spec)
    }

    /// Cutoff and temperature given in units of omega0 and hbar*omega0.
    pub fn in_model_units(xi: f64, cutoff_ratio: f64, temperature_ratio: f64, model: &ThreeLevelModel) -> Result<Self> {
        let spec = Self::new(xi, cutoff_ratio * model.omega0, temperature_ratio * model.omega0)?;
        spec.validate_for(model)?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi.is_finite() && self.xi >= 0.0) {
            return Err(Error::InvalidBath(format!("xi = {} must be finite and >= 0", self.xi)));
        }
        if !(self.omega_s.is_finite() && self.omega_s > 0.0) {
            return Err(Error::InvalidBath(format!("omega_s = {} must be positive", self.omega_s)));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::InvalidBath(format!("temperature = {} must be >= 0", self.temperature)));
        }
        Ok(())
    }

    /// The cutoff must exceed every transition frequency of the model.
    pub fn validate_for(&self, model: &ThreeLevelModel) -> Result<()> {
        self.validate()?;
        if self.omega_s <= 5.0 * model.omega1 {
            return Err(Error::InvalidBath(format!(
                "omega_s = {} must exceed 5 omega1 = {}",
                self.omega_s,
                5.0 * model.omega1
            )));
        }
        Ok(())
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = xi;
        self
    }

    /// Prefactor of J(w)/hbar^2 = kappa w exp(-w/omega_s).
    pub fn kappa(&self, charging_energy: f64, omega0: f64) -> f64 {
        omega0 * self.xi / (8.0 * charging_energy)
    }

    pub fn kernel(&self, model: &ThreeLevelModel) -> OhmicKernel {
        OhmicKernel {
            kappa: self.kappa(model.charging_energy, model.omega0),
            omega_s: self.omega_s,
            temperature: self.temperature,
        }
    }
}

/// J(w)/hbar^2 for the Ohmic bath.
pub fn spectral_density(bath: &BathSpec, charging_energy: f64, omega0: f64, omega: f64) -> Result<f64> {
    if omega < 0.0 {
        return Err(Error::NegativeFrequency(omega));
    }
    Ok(bath.kappa(charging_energy, omega0) * omega * (-omega / bath.omega_s).exp())
}

/// Bose occupation 1/(exp(w/T) - 1) with T in rad/ns.
pub fn planck(omega: f64, temperature: f64) -> Result<f64> {
    if omega <= 0.0 {
        return Err(Error::NonPositiveFrequency(omega));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (omega / temperature).exp_m1())
}

/// Golden-rule decay rate of the first excited level (1/ns).
pub fn golden_rule_gamma(model: &ThreeLevelModel, bath: &BathSpec) -> f64 {
    let j = bath.kernel(model).spectral_density(model.omega0);
    2.0 * PI * j * model.q_matrix[(0, 1)].powi(2)
}

/// Memory kernels of one bath resolved against a model's energy scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OhmicKernel {
    pub kappa: f64,
    pub omega_s: f64,
    pub temperature: f64,
}

impl OhmicKernel {
    pub fn spectral_density(&self, omega: f64) -> f64 {
        self.kappa * omega * (-omega / self.omega_s).exp()
    }

    /// eta1(t)/hbar^2 (real).
    pub fn eta1(&self, t: f64) -> f64 {
        let a = 1.0 / self.omega_s;
        let z = Complex64::new(a, -t);
        let mut value = (1.0 / (z * z)).re;
        if self.temperature > 0.0 {
            // coth(w/2T) = 1 + 2 sum_n exp(-n w/T) turns each term into 1/(z + n/T)^2.
            let tt = self.temperature;
            value += 2.0 * tt * tt * trigamma(1.0 + z * tt).re;
        }
        self.kappa * value
    }

    /// eta2(t)/hbar^2 (purely imaginary).
    pub fn eta2(&self, t: f64) -> Complex64 {
        Complex64::new(0.0, self.eta2_im(t))
    }

    pub(crate) fn eta2_im(&self, t: f64) -> f64 {
        let a = 1.0 / self.omega_s;
        let d = a * a + t * t;
        self.kappa * 2.0 * a * t / (d * d)
    }

    /// Re K(inf, w): pi J(w) N(w) for w > 0, pi J(|w|) (1 + N(|w|)) for
    /// w < 0 and pi kappa T at w = 0.
    pub fn markov_rate(&self, omega: f64) -> f64 {
        let w = omega.abs();
        if w == 0.0 {
            return PI * self.kappa * self.temperature;
        }
        let n = if self.temperature == 0.0 { 0.0 } else { 1.0 / (w / self.temperature).exp_m1() };
        let occupation = if omega > 0.0 { n } else { 1.0 + n };
        PI * self.spectral_density(w) * occupation
    }

    /// Thermal weight w(1 + 2N(w)), finite as w -> 0.
    fn thermal_weight(&self, omega: f64) -> f64 {
        if self.temperature == 0.0 {
            return omega;
        }
        let x = omega / (2.0 * self.temperature);
        if x < 1e-8 {
            2.0 * self.temperature
        } else {
            omega / x.tanh()
        }
    }

    fn breaks(&self, t: f64) -> Vec<f64> {
        let mut b = vec![0.0];
        // The thermal factor varies on the scale T.
        let mut w = self.temperature;
        while w > 0.0 && w < self.omega_s {
            b.push(w);
            w *= 2.0;
        }
        // Pieces of width omega_s, shortened so each holds a few oscillations.
        let width = if t > 0.0 { self.omega_s.min(8.0 * PI / t) } else { self.omega_s };
        let top = 60.0 * self.omega_s;
        w = self.omega_s.min(width);
        while w < top {
            if w > *b.last().unwrap() {
                b.push(w);
            }
            w += width;
        }
        b.push(top);
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// eta1 by direct adaptive quadrature of its frequency integral.
    pub fn eta1_quadrature(&self, t: f64) -> Result<f64> {
        if self.kappa == 0.0 {
            return Ok(0.0);
        }
        let f = |w: f64| self.thermal_weight(w) * (-w / self.omega_s).exp() * (w * t).cos();
        let scale = self.omega_s * self.omega_s;
        Ok(self.kappa * integrate_with_breaks(f, &self.breaks(t), 1e-13 * scale, 1e-12)?)
    }

    /// eta2 by direct adaptive quadrature of its frequency integral.
    pub fn eta2_quadrature(&self, t: f64) -> Result<Complex64> {
        if self.kappa == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let f = |w: f64| w * (-w / self.omega_s).exp() * (w * t).sin();
        let scale = self.omega_s * self.omega_s;
        let v = integrate_with_breaks(f, &self.breaks(t), 1e-13 * scale, 1e-12)?;
        Ok(Complex64::new(0.0, self.kappa * v))
    }
}

/// Number of distinct transition frequencies among three levels.
pub const N_FREQ: usize = 7;

/// Cumulative kernel integrals
/// K(t, w) = int_0^t [eta1(s) e^{-iws} - eta2(s) (e^{-iws} - c)] ds,
/// with c = 1 when the counterterm is on and c = 0 otherwise, tabulated on a
/// uniform grid for each transition frequency w = E_j - E_k.
#[derive(Debug, Clone)]
pub struct KernelTables {
    step: f64,
    frequencies: [f64; N_FREQ],
    index: [[usize; 3]; 3],
    values: Vec<[Complex64; N_FREQ]>,
    change: f64,
    limit: [Complex64; N_FREQ],
    pub bath: BathSpec,
    pub kernel: OhmicKernel,
}

fn transition_index() -> [[usize; 3]; 3] {
    // 0: 0, 1: +w0, 2: -w0, 3: +(w1-w0), 4: -(w1-w0), 5: +w1, 6: -w1
    [[0, 2, 6], [1, 0, 4], [5, 3, 0]]
}

/// Tabulate K on nodes spaced `dt / 2`, so that every Runge-Kutta substep
/// time is a node. Each node interval is integrated with Simpson's rule.
pub fn build_kernel_tables(model: &ThreeLevelModel, bath: &BathSpec, dt: f64, t_max: f64) -> Result<KernelTables> {
    bath.validate()?;
    let limit = 0.1 / bath.omega_s;
    if dt.is_nan() || dt <= 0.0 || dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepTooCoarse { dt, limit });
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidSimulation(format!("table range {t_max} must be positive")));
    }
    let kernel = bath.kernel(model);
    let w0 = model.omega0;
    let w1 = model.omega1;
    let frequencies = [0.0, w0, -w0, w1 - w0, w0 - w1, w1, -w1];
    let step = 0.5 * dt;
    let intervals = (t_max / step - 1e-9).ceil().max(1.0) as usize;
    let zero = [Complex64::new(0.0, 0.0); N_FREQ];
    let mut values = Vec::with_capacity(intervals + 1);
    values.push(zero);
    if kernel.kappa == 0.0 {
        values.resize(intervals + 1, zero);
        let index = transition_index();
        return Ok(KernelTables { step, frequencies, index, values, change: 0.0, limit: zero, bath: *bath, kernel });
    }

    let c = if bath.counterterm { 1.0 } else { 0.0 };
    // Integrands of K_A and K_B at time s.
    let integrands = |s: f64| -> ([Complex64; N_FREQ], [Complex64; N_FREQ]) {
        let e1 = kernel.eta1(s);
        let e2 = Complex64::new(0.0, kernel.eta2_im(s));
        let mut fa = zero;
        let mut fb = zero;
        for (n, &w) in frequencies.iter().enumerate() {
            let (sin, cos) = (w * s).sin_cos();
            let phase = Complex64::new(cos, -sin);
            fa[n] = e1 * phase - e2 * (phase - c);
            fb[n] = e1 * phase + e2 * (phase - c);
        }
        (fa, fb)
    };

    let mut acc_a = zero;
    let mut acc_b = zero;
    let (mut left_a, mut left_b) = integrands(0.0);
    for i in 0..intervals {
        let t = i as f64 * step;
        let (mid_a, mid_b) = integrands(t + 0.5 * step);
        let (right_a, right_b) = integrands(t + step);
        for n in 0..N_FREQ {
            acc_a[n] += step / 6.0 * (left_a[n] + 4.0 * mid_a[n] + right_a[n]);
            acc_b[n] += step / 6.0 * (left_b[n] + 4.0 * mid_b[n] + right_b[n]);
        }
        values.push(acc_a);
        left_a = right_a;
        left_b = right_b;
    }

    // Lambda_B = Lambda_A^dagger elementwise: K_B(w) = conj K_A(-w).
    let scale = acc_a.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let negate = [0, 2, 1, 4, 3, 6, 5];
    for n in 0..N_FREQ {
        let mismatch = (acc_b[n] - acc_a[negate[n]].conj()).norm();
        assert!(mismatch <= 1e-12 * scale, "kernel tables violate Lambda_B = Lambda_A^dagger: {mismatch:e}");
    }

    let last = values.len() - 1;
    let earlier = &values[(last as f64 * 0.9).floor() as usize];
    let change = if scale > 0.0 {
        (0..N_FREQ).map(|n| (acc_a[n] - earlier[n]).norm()).fold(0.0, f64::max) / scale
    } else {
        0.0
    };
    let mut limit = acc_a;
    for (n, &w) in frequencies.iter().enumerate() {
        limit[n].re = kernel.markov_rate(w);
    }
    Ok(KernelTables { step, frequencies, index: transition_index(), values, change, limit, bath: *bath, kernel })
}

impl KernelTables {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn t_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }

    pub fn frequencies(&self) -> &[f64; N_FREQ] {
        &self.frequencies
    }

    /// Table slot holding frequency E_j - E_k.
    pub fn slot(&self, j: usize, k: usize) -> usize {
        self.index[j][k]
    }

    /// Relative change of the tables over their last tenth.
    pub fn plateau_change(&self) -> f64 {
        self.change
    }

    pub fn converged(&self) -> bool {
        self.change <= PLATEAU_TOLERANCE
    }

    /// Long-time limit of K; requires a converged table.
    ///
    /// The real parts are the exact rates pi J(|w|) (N or N + 1); the
    /// imaginary parts are the last tabulated values.
    pub fn plateau(&self) -> Result<[Complex64; N_FREQ]> {
        if !self.converged() {
            return Err(Error::TablesNotConverged { change: self.change });
        }
        Ok(self.limit)
    }

    /// K at time t: exact at nodes, linear between them, plateau past the end.
    pub fn at(&self, t: f64) -> Result<[Complex64; N_FREQ]> {
        let t_max = self.t_max();
        if t > t_max * (1.0 + 1e-12) {
            return self.plateau().map_err(|_| Error::TableRangeExceeded { t, t_max });
        }
        let u = (t.max(0.0) / self.step).min((self.values.len() - 1) as f64);
        let i = u.floor() as usize;
        let frac = u - i as f64;
        if frac < 1e-9 || i + 1 >= self.values.len() {
            return Ok(self.values[i]);
        }
        if frac > 1.0 - 1e-9 {
            return Ok(self.values[i + 1]);
        }
        let (lo, hi) = (&self.values[i], &self.values[i + 1]);
        let mut out = [Complex64::new(0.0, 0.0); N_FREQ];
        for n in 0..N_FREQ {
            out[n] = lo[n] + (hi[n] - lo[n]) * frac;
        }
        Ok(out)
    }

    /// Lambda_jk = q_jk K(E_j - E_k).
    pub fn lambda(&self, q: &Matrix3<f64>, k: &[Complex64; N_FREQ]) -> Matrix3<Complex64> {
        Matrix3::from_fn(|j, l| k[self.index[j][l]] * q[(j, l)])
    }

    /// Diagnostic dump: t, eta1, Im eta2, and K at the relaxation and excitation frequencies.
    pub fn to_csv(&self, stride: usize) -> String {
        let mut out = String::from("t,eta1,eta2_im,re_K_minus_w0,im_K_minus_w0,re_K_plus_w0,im_K_plus_w0\n");
        for (i, v) in self.values.iter().enumerate().step_by(stride.max(1)) {
            let t = i as f64 * self.step;
            out.push_str(&format!(
                "{:.9e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                t,
                self.kernel.eta1(t),
                self.kernel.eta2_im(t),
                v[2].re,
                v[2].im,
                v[1].re,
                v[1].im
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planck_limits() {
        assert_eq!(planck(1.0, 0.0).unwrap(), 0.0);
        assert!((planck(2f64.ln(), 1.0).unwrap() - 1.0).abs() < 1e-14);
        let n = planck(1.0, 100.0).unwrap();
        assert!((n - 100.0).abs() / 100.0 < 0.01);
        assert!(matches!(planck(0.0, 1.0), Err(Error::NonPositiveFrequency(_))));
    }

    #[test]
    fn spectral_density_shape() {
        let bath = BathSpec::new(2.0, 10.0, 0.0).unwrap();
        assert_eq!(spectral_density(&bath, 0.1, 40.0, 0.0).unwrap(), 0.0);
        assert!(matches!(spectral_density(&bath, 0.1, 40.0, -1.0), Err(Error::NegativeFrequency(_))));
        let j = |w: f64| spectral_density(&bath, 0.1, 40.0, w).unwrap();
        let h = 1e-4;
        assert!(((j(10.0 + h) - j(10.0 - h)) / (2.0 * h)).abs() < 1e-6 * j(10.0));
        let zero = bath.with_xi(0.0);
        assert_eq!(spectral_density(&zero, 0.1, 40.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn kernel_values_at_zero_lag() {
        let k = OhmicKernel { kappa: 1.5, omega_s: 100.0, temperature: 0.0 };
        assert!((k.eta1(0.0) - 1.5e4).abs() < 1e-9);
        assert_eq!(k.eta2(0.0), Complex64::new(0.0, 0.0));
        let warm = OhmicKernel { temperature: 3.0, ..k };
        assert!(warm.eta1(0.0) > k.eta1(0.0));
    }

    #[test]
    fn eta2_decays_as_inverse_cube() {
        let k = OhmicKernel { kappa: 1.0, omega_s: 100.0, temperature: 0.0 };
        let r = k.eta2_im(10.0) / k.eta2_im(20.0);
        assert!((r - 8.0).abs() < 1e-3);
    }

    #[test]
    fn validation() {
        assert!(BathSpec::new(-1.0, 1.0, 0.0).is_err());
        assert!(BathSpec::new(1.0, 0.0, 0.0).is_err());
        assert!(BathSpec::new(1.0, 1.0, -0.1).is_err());
        assert!(BathSpec::new(0.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn transition_slots_match_frequencies() {
        let model = ThreeLevelModel::from_parts(
            40.0,
            78.0,
            Matrix3::new(0.0, 0.1, 0.0, 0.1, 0.0, 0.14, 0.0, 0.14, 0.0),
            Matrix3::new(1.0, 0.1, 0.0, 0.1, 1.0, 0.14, 0.0, 0.14, 1.0),
            0.12,
        );
        let bath = BathSpec::new(1e-5, 20.0 * 40.0, 0.0).unwrap();
        let tables = build_kernel_tables(&model, &bath, 1e-4, 0.01).unwrap();
        let e = model.level_energies();
        for j in 0..3 {
            for k in 0..3 {
                assert_eq!(tables.frequencies()[tables.slot(j, k)], e[j] - e[k]);
            }
        }
    }
}
