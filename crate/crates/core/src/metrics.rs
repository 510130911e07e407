//! Gate fidelity of the NOT operation and the rate-equation error estimate.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::Serialize;

use crate::bath::planck;
use crate::circuit::ThreeLevelModel;
use crate::error::{Error, Result};
use crate::propagator::{CMatrix3, Trajectory};

/// sigma_x on the qubit block, identity on level 2.
pub fn ideal_not() -> CMatrix3 {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    Matrix3::new(zero, one, zero, one, zero, zero, zero, zero, one)
}

/// Move a lab-frame state into the frame of the carrier.
///
/// With theta_g the carrier phase at the end of the gate, the reference
/// evolution is U0 = diag(1, exp(-i theta_g), exp(-i (2 theta_g + Delta t_g)))
/// and the stripped state is U0^dagger rho U0. For a resonant carrier this is
/// exactly the free evolution exp(-i diag(0, w0, w1) t_g).
pub fn phase_strip(rho: &CMatrix3, theta_g: f64, gate_time: f64, model: &ThreeLevelModel) -> CMatrix3 {
    let phases = [0.0, theta_g, 2.0 * theta_g + model.anharmonicity * gate_time];
    let u0 = Matrix3::from_diagonal(&nalgebra::Vector3::from_iterator(
        phases.iter().map(|p| Complex64::from_polar(1.0, -p)),
    ));
    u0.adjoint() * rho * u0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateResult {
    pub fidelity: f64,
    pub error: f64,
    /// Tr[U rho_j(0) U^dagger rho_j(t_g)] for the runs starting in |0> and |1>.
    pub overlaps: [f64; 2],
    /// Final level-2 population averaged over both runs.
    pub leakage: f64,
    /// Time-averaged rho_00 and rho_11 over the gate, averaged over both runs.
    pub rho_bar_00: f64,
    pub rho_bar_11: f64,
}

fn overlap(expected: &CMatrix3, actual: &CMatrix3) -> f64 {
    (expected * actual).trace().re
}

/// Fidelity averaged over the initial states |0> and |1>, read at t_g and
/// referenced to the carrier frame with phase `theta_g`.
pub fn gate_fidelity(
    from_ket0: &Trajectory,
    from_ket1: &Trajectory,
    gate_time: f64,
    theta_g: f64,
    model: &ThreeLevelModel,
) -> Result<GateResult> {
    if from_ket0.tag != from_ket1.tag {
        return Err(Error::MismatchedRuns);
    }
    let u = ideal_not();
    let mut overlaps = [0.0; 2];
    let mut leakage = 0.0;
    let mut rho_bar = [0.0; 2];
    for (j, traj) in [from_ket0, from_ket1].into_iter().enumerate() {
        let initial = traj.states.first().expect("non-empty trajectory");
        let idx = traj.nearest_sample(gate_time);
        let (t, reached) = (traj.times[idx], &traj.states[idx]);
        if (t - gate_time).abs() > 1e-9 * gate_time.max(1.0) {
            return Err(Error::InvalidSimulation(format!("no sample at the gate time {gate_time} (closest {t})")));
        }
        let stripped = phase_strip(reached, theta_g, gate_time, model);
        overlaps[j] = overlap(&(u * initial * u.adjoint()), &stripped);
        leakage += 0.5 * reached[(2, 2)].re;
        let (r0, r1) = averaged_populations(traj, gate_time);
        rho_bar[0] += 0.5 * r0;
        rho_bar[1] += 0.5 * r1;
    }
    let fidelity = 0.5 * (overlaps[0] + overlaps[1]);
    Ok(GateResult {
        fidelity,
        error: 1.0 - fidelity,
        overlaps,
        leakage,
        rho_bar_00: rho_bar[0],
        rho_bar_11: rho_bar[1],
    })
}

/// Trapezoid averages of rho_00 and rho_11 over [0, t_g].
pub fn averaged_populations(traj: &Trajectory, gate_time: f64) -> (f64, f64) {
    if (traj.averaging_window - gate_time).abs() <= 1e-12 * gate_time.max(1.0) {
        return (traj.averaged[0], traj.averaged[1]);
    }
    let mut sums = [0.0; 2];
    for w in 0..traj.times.len().saturating_sub(1) {
        let (t0, t1) = (traj.times[w], traj.times[w + 1].min(gate_time));
        if t1 <= t0 {
            break;
        }
        let (a, b) = (&traj.states[w], &traj.states[w + 1]);
        let frac = (t1 - t0) / (traj.times[w + 1] - t0);
        for k in 0..2 {
            let start = a[(k, k)].re;
            let end = start + frac * (b[(k, k)].re - start);
            sums[k] += 0.5 * (t1 - t0) * (start + end);
        }
    }
    (sums[0] / gate_time, sums[1] / gate_time)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEstimate {
    /// Rate-equation error at the requested temperature.
    pub e_rate: f64,
    /// Gamma t_g rho_bar_11.
    pub e_rate_zero: f64,
    /// 1 + 4 N(w0).
    pub ratio_simple: f64,
}

/// E(T) = Gamma t_g [((1 + N(w0)) + lambda^2 N(w1 - w0)) rho_bar_11 + N(w0) rho_bar_00].
pub fn rate_equation_error(
    gamma: f64,
    gate_time: f64,
    model: &ThreeLevelModel,
    temperature: f64,
    rho_bar_00: f64,
    rho_bar_11: f64,
) -> Result<RateEstimate> {
    let n0 = planck(model.omega0, temperature)?;
    let n1 = planck(model.omega1 - model.omega0, temperature)?;
    let scale = gamma * gate_time;
    Ok(RateEstimate {
        e_rate: scale * (((1.0 + n0) + model.lambda * model.lambda * n1) * rho_bar_11 + n0 * rho_bar_00),
        e_rate_zero: scale * rho_bar_11,
        ratio_simple: 1.0 + 4.0 * n0,
    })
}
