//! Flux-biased phase qubit: potential, well geometry, 1D spectrum on a phase
//! grid and the truncated three-level model.
//!
//! Units: hbar = 1, energies are angular frequencies in rad/ns, times in ns.
//! With E_C = e^2/2C and E_J = phi0 I0 / 2pi the circuit Hamiltonian reads
//!
//!   H = -4 E_C d^2/d delta^2 + E_J [ (delta - delta_ext)^2 / (2 beta_L) - cos delta ]
//!
//! where delta_ext = 2 pi phi_ext / phi0.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tridiag::SymTridiagonal;

/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054571817e-34;
/// Superconducting flux quantum h / 2e (Wb).
pub const FLUX_QUANTUM: f64 = 2.0 * PI * HBAR / (2.0 * ELEMENTARY_CHARGE);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// Junction capacitance (F).
    pub capacitance: f64,
    /// Junction critical current (A).
    pub critical_current: f64,
    /// 2 pi L I0 / phi0.
    pub beta_l: f64,
    /// phi_ext / phi_c.
    pub flux_fraction: f64,
}

impl CircuitParams {
    pub fn new(capacitance: f64, critical_current: f64, beta_l: f64, flux_fraction: f64) -> Result<Self> {
        let p = Self { capacitance, critical_current, beta_l, flux_fraction };
        p.validate()?;
        Ok(p)
    }

    /// C = 1 pF, I0 = 1.5 uA, beta_L = 3.2, phi_ext = 0.955 phi_c.
    pub fn reference() -> Self {
        Self { capacitance: 1e-12, critical_current: 1.5e-6, beta_l: 3.2, flux_fraction: 0.955 }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.capacitance, self.critical_current, self.beta_l, self.flux_fraction]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidCircuit("non-finite parameter".into()));
        }
        if self.capacitance <= 0.0 {
            return Err(Error::InvalidCircuit(format!("capacitance {} must be positive", self.capacitance)));
        }
        if self.critical_current <= 0.0 {
            return Err(Error::InvalidCircuit(format!(
                "critical current {} must be positive",
                self.critical_current
            )));
        }
        if self.beta_l <= 1.0 {
            return Err(Error::NoDoubleWell(self.beta_l));
        }
        if self.flux_fraction <= 0.0 {
            return Err(Error::InvalidCircuit(format!(
                "flux fraction {} must be positive",
                self.flux_fraction
            )));
        }
        if self.flux_fraction >= 1.0 {
            return Err(Error::NoShallowWell(self.flux_fraction));
        }
        Ok(())
    }

    /// Charging energy E_C / hbar = e^2 / (2 C hbar) in rad/ns.
    pub fn charging_energy(&self) -> f64 {
        ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * self.capacitance * HBAR) * 1e-9
    }

    /// Josephson energy E_J / hbar = phi0 I0 / (2 pi hbar) in rad/ns.
    pub fn josephson_energy(&self) -> f64 {
        FLUX_QUANTUM * self.critical_current / (2.0 * PI * HBAR) * 1e-9
    }

    /// Loop inductance L = beta_L phi0 / (2 pi I0) (H).
    pub fn inductance(&self) -> f64 {
        self.beta_l * FLUX_QUANTUM / (2.0 * PI * self.critical_current)
    }

    /// delta_ext = 2 pi phi_ext / phi0 for the configured flux fraction.
    pub fn phase_bias(&self) -> Result<f64> {
        Ok(2.0 * PI * self.flux_fraction * critical_flux(self)?)
    }
}

/// Potential energy U(delta)/hbar in rad/ns.
pub fn potential(params: &CircuitParams, delta: f64) -> f64 {
    let bias = params.phase_bias().unwrap_or(f64::NAN);
    potential_with_bias(params, bias, delta)
}

pub(crate) fn potential_with_bias(params: &CircuitParams, bias: f64, delta: f64) -> f64 {
    let x = delta - bias;
    params.josephson_energy() * (x * x / (2.0 * params.beta_l) - delta.cos())
}

fn potential_slope(params: &CircuitParams, bias: f64, delta: f64) -> f64 {
    params.josephson_energy() * ((delta - bias) / params.beta_l + delta.sin())
}

fn potential_curvature(params: &CircuitParams, delta: f64) -> f64 {
    params.josephson_energy() * (1.0 / params.beta_l + delta.cos())
}

/// Critical flux phi_c / phi0 at which the shallow minimum and the barrier
/// top merge. Uses the inflection branch cos delta* = -1/beta_L with
/// delta* in (pi/2, pi).
pub fn critical_flux(params: &CircuitParams) -> Result<f64> {
    if params.beta_l <= 1.0 {
        return Err(Error::NoDoubleWell(params.beta_l));
    }
    let inflection = (-1.0 / params.beta_l).acos();
    let bias = inflection + params.beta_l * inflection.sin();
    Ok(bias / (2.0 * PI))
}

/// Phase of the merger point at the critical flux.
pub fn critical_phase(params: &CircuitParams) -> Result<f64> {
    if params.beta_l <= 1.0 {
        return Err(Error::NoDoubleWell(params.beta_l));
    }
    Ok((-1.0 / params.beta_l).acos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WellGeometry {
    pub delta_shallow_min: f64,
    pub delta_barrier_top: f64,
    pub delta_deep_min: f64,
    /// U(barrier) - U(shallow minimum), rad/ns.
    pub barrier_height: f64,
    /// Critical flux in flux quanta.
    pub phi_c: f64,
    /// delta_ext used to build the potential.
    pub phase_bias: f64,
}

impl WellGeometry {
    /// True when `delta` is on the shallow-well side of the barrier top.
    pub fn on_shallow_side(&self, delta: f64) -> bool {
        (delta < self.delta_barrier_top) == (self.delta_shallow_min < self.delta_barrier_top)
    }
}

fn refine_root(params: &CircuitParams, bias: f64, mut lo: f64, mut hi: f64) -> f64 {
    let tol = 1e-12 * params.josephson_energy();
    let mut flo = potential_slope(params, bias, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fmid = potential_slope(params, bias, mid);
        if fmid.abs() < tol * 1e-3 || mid <= lo || mid >= hi {
            return mid;
        }
        if (fmid < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Stationary points of U in ascending phase order.
fn stationary_points(params: &CircuitParams, bias: f64) -> Vec<f64> {
    // All roots of U' satisfy |delta - bias| <= beta_L.
    let lo = bias - params.beta_l - 0.1;
    let hi = bias + params.beta_l + 0.1;
    let n = 20_000;
    let step = (hi - lo) / n as f64;
    let mut roots = Vec::new();
    let mut prev = potential_slope(params, bias, lo);
    for i in 1..=n {
        let x = lo + step * i as f64;
        let cur = potential_slope(params, bias, x);
        if cur == 0.0 {
            roots.push(x);
        } else if prev != 0.0 && (cur < 0.0) != (prev < 0.0) {
            roots.push(refine_root(params, bias, x - step, x));
        }
        prev = cur;
    }
    roots
}

/// Locate the shallow minimum, the barrier top next to it and the deep minimum.
pub fn well_geometry(params: &CircuitParams) -> Result<WellGeometry> {
    if params.flux_fraction >= 1.0 {
        return Err(Error::NoShallowWell(params.flux_fraction));
    }
    params.validate()?;
    let phi_c = critical_flux(params)?;
    let bias = 2.0 * PI * params.flux_fraction * phi_c;
    let merger = critical_phase(params)?;
    let roots = stationary_points(params, bias);
    let (minima, maxima): (Vec<f64>, Vec<f64>) =
        roots.iter().partition(|&&d| potential_curvature(params, d) > 0.0);
    let shallow = minima
        .iter()
        .copied()
        .filter(|&d| d < merger)
        .fold(f64::NAN, |acc: f64, d| if acc.is_nan() || d > acc { d } else { acc });
    let barrier = maxima
        .iter()
        .copied()
        .filter(|&d| d > merger)
        .fold(f64::NAN, |acc: f64, d| if acc.is_nan() || d < acc { d } else { acc });
    if shallow.is_nan() || barrier.is_nan() {
        return Err(Error::NoShallowWell(params.flux_fraction));
    }
    let deep = minima
        .iter()
        .copied()
        .min_by(|a, b| {
            potential_with_bias(params, bias, *a)
                .partial_cmp(&potential_with_bias(params, bias, *b))
                .unwrap()
        })
        .expect("at least one minimum");
    let barrier_height =
        potential_with_bias(params, bias, barrier) - potential_with_bias(params, bias, shallow);
    Ok(WellGeometry {
        delta_shallow_min: shallow,
        delta_barrier_top: barrier,
        delta_deep_min: deep,
        barrier_height,
        phi_c,
        phase_bias: bias,
    })
}

/// Uniform grid of phase values; the end points are the last interior nodes
/// in front of hard walls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseGrid {
    pub delta_min: f64,
    pub delta_max: f64,
    pub n_points: usize,
}

impl PhaseGrid {
    pub const MIN_POINTS: usize = 1001;
    pub const DEFAULT_POINTS: usize = 4001;
    pub const DEFAULT_MARGIN: f64 = 1.5;

    pub fn new(delta_min: f64, delta_max: f64, n_points: usize) -> Result<Self> {
        if !(delta_min.is_finite() && delta_max.is_finite()) || delta_max <= delta_min {
            return Err(Error::InvalidGrid(format!("bad range [{delta_min}, {delta_max}]")));
        }
        if n_points < Self::MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "{n_points} points, need at least {}",
                Self::MIN_POINTS
            )));
        }
        Ok(Self { delta_min, delta_max, n_points })
    }

    /// Grid spanning both wells and the barrier with a margin on either side.
    pub fn covering(geometry: &WellGeometry, margin: f64, n_points: usize) -> Result<Self> {
        let pts = [geometry.delta_shallow_min, geometry.delta_barrier_top, geometry.delta_deep_min];
        let lo = pts.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = pts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(lo - margin, hi + margin, n_points)
    }

    pub fn spacing(&self) -> f64 {
        (self.delta_max - self.delta_min) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.delta_min + self.spacing() * i as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.point(i))
    }

    /// Same span with the number of intervals doubled.
    pub fn refined(&self) -> Self {
        Self { n_points: 2 * self.n_points - 1, ..*self }
    }
}

/// Eigenpairs of the discretized circuit Hamiltonian.
#[derive(Debug, Clone)]
pub struct SpectralSolution {
    pub grid: PhaseGrid,
    /// Ascending eigenvalues (rad/ns).
    pub energies: Vec<f64>,
    /// Wavefunctions on the grid, normalized so that sum |psi|^2 h = 1.
    pub wavefunctions: Vec<Vec<f64>>,
    /// Phase used to fix the wavefunction signs.
    pub sign_reference: f64,
}

impl SpectralSolution {
    pub fn overlap(&self, j: usize, k: usize) -> f64 {
        let h = self.grid.spacing();
        self.wavefunctions[j].iter().zip(&self.wavefunctions[k]).map(|(a, b)| a * b).sum::<f64>() * h
    }

    /// Matrix element of an arbitrary function of the phase.
    pub fn matrix_element(&self, j: usize, k: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = self.grid.spacing();
        self.grid
            .points()
            .zip(self.wavefunctions[j].iter().zip(&self.wavefunctions[k]))
            .map(|(d, (a, b))| a * f(d) * b)
            .sum::<f64>()
            * h
    }

    /// CSV with columns delta, psi_a, psi_b, ... for the requested states.
    pub fn to_csv(&self, states: &[usize]) -> String {
        let mut out = String::from("delta");
        for (n, _) in states.iter().enumerate() {
            out.push_str(&format!(",psi{n}"));
        }
        out.push('\n');
        for (i, d) in self.grid.points().enumerate() {
            out.push_str(&format!("{d:.10e}"));
            for &s in states {
                out.push_str(&format!(",{:.10e}", self.wavefunctions[s][i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Fix the global sign of each eigenvector: positive at the reference phase,
/// or, when the reference sits on a node, positive on the first significant
/// lobe scanning upward in phase.
fn fix_sign(psi: &mut [f64], grid: &PhaseGrid, reference: f64) {
    let peak = psi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let idx = ((reference - grid.delta_min) / grid.spacing()).round().clamp(0.0, (grid.n_points - 1) as f64) as usize;
    let at_ref = psi[idx];
    let sign = if at_ref.abs() > 1e-6 * peak {
        at_ref.signum()
    } else {
        psi.iter().find(|v| v.abs() > 1e-3 * peak).map(|v| v.signum()).unwrap_or(1.0)
    };
    if sign < 0.0 {
        psi.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Lowest `count` eigenpairs with energy at or above `floor` for
/// -4 E_C d^2/d delta^2 + U(delta), second-order finite differences and
/// hard walls just outside the grid.
pub fn solve_potential(
    potential: impl Fn(f64) -> f64,
    charging_energy: f64,
    grid: &PhaseGrid,
    count: usize,
    floor: f64,
    sign_reference: f64,
) -> Result<SpectralSolution> {
    if count == 0 {
        return Err(Error::InvalidGrid("requested zero eigenpairs".into()));
    }
    let h = grid.spacing();
    let kinetic = 4.0 * charging_energy / (h * h);
    let diag: Vec<f64> = grid.points().map(|d| 2.0 * kinetic + potential(d)).collect();
    let off = vec![-kinetic; grid.n_points - 1];
    let matrix = SymTridiagonal::new(diag, off);
    let first = if floor.is_finite() { matrix.count_below(floor) } else { 0 };
    if first + count > matrix.dim() {
        return Err(Error::InvalidGrid("grid too small for requested number of levels".into()));
    }
    let pairs = matrix.eigenpairs(first, count);
    let norm = 1.0 / h.sqrt();
    let mut energies = Vec::with_capacity(count);
    let mut wavefunctions = Vec::with_capacity(count);
    for (e, v) in pairs {
        let mut psi: Vec<f64> = v.into_iter().map(|x| x * norm).collect();
        fix_sign(&mut psi, grid, sign_reference);
        energies.push(e);
        wavefunctions.push(psi);
    }
    Ok(SpectralSolution { grid: *grid, energies, wavefunctions, sign_reference })
}

/// Relative shift tolerated between a solve and its doubled-resolution twin.
pub const CONVERGENCE_TOL: f64 = 1e-6;

/// Lowest `m` levels of the circuit above the bottom of the shallow well.
///
/// The solve is repeated on the doubled grid and the three lowest
/// shallow-well energies must agree to [`CONVERGENCE_TOL`]; the finer
/// solution is returned.
pub fn solve_spectrum(params: &CircuitParams, grid: &PhaseGrid, m: usize) -> Result<SpectralSolution> {
    if m < 3 {
        return Err(Error::InvalidGrid(format!("need at least 3 levels, asked for {m}")));
    }
    let geometry = well_geometry(params)?;
    let bias = geometry.phase_bias;
    let u = |d: f64| potential_with_bias(params, bias, d);
    let floor = u(geometry.delta_shallow_min);
    let ec = params.charging_energy();
    let coarse = solve_potential(u, ec, grid, m, floor, geometry.delta_shallow_min)?;
    let fine = solve_potential(u, ec, &grid.refined(), m, floor, geometry.delta_shallow_min)?;
    let pick = |s: &SpectralSolution| -> Result<Vec<f64>> {
        Ok(classify_shallow(s, &geometry, SHALLOW_THRESHOLD)?.iter().map(|&j| s.energies[j]).collect())
    };
    check_convergence(&pick(&coarse)?, &pick(&fine)?)?;
    Ok(fine)
}

fn check_convergence(coarse: &[f64], fine: &[f64]) -> Result<()> {
    for level in 0..3 {
        let shift = (fine[level] / coarse[level] - 1.0).abs();
        if shift > CONVERGENCE_TOL {
            return Err(Error::GridTooCoarse { level, shift });
        }
    }
    Ok(())
}

/// Default fraction of probability that must sit on the shallow side.
pub const SHALLOW_THRESHOLD: f64 = 0.9;

/// Probability weight of state `j` on the shallow side of the barrier.
pub fn shallow_weight(solution: &SpectralSolution, geometry: &WellGeometry, j: usize) -> f64 {
    let h = solution.grid.spacing();
    solution
        .grid
        .points()
        .zip(&solution.wavefunctions[j])
        .filter(|(d, _)| geometry.on_shallow_side(*d))
        .map(|(_, p)| p * p)
        .sum::<f64>()
        * h
}

/// Indices of the states localized in the shallow well, ordered by energy.
pub fn classify_shallow(
    solution: &SpectralSolution,
    geometry: &WellGeometry,
    threshold: f64,
) -> Result<Vec<usize>> {
    let indices: Vec<usize> = (0..solution.energies.len())
        .filter(|&j| shallow_weight(solution, geometry, j) >= threshold)
        .collect();
    if indices.len() < 3 {
        return Err(Error::InsufficientShallowLevels { found: indices.len() });
    }
    Ok(indices)
}

/// Truncated qubit: ground, first excited and leakage level of the shallow well.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThreeLevelModel {
    /// (eps_1 - eps_0), rad/ns.
    pub omega0: f64,
    /// (eps_2 - eps_0), rad/ns.
    pub omega1: f64,
    /// omega1 - 2 omega0, rad/ns.
    pub anharmonicity: f64,
    /// <j|delta|k>, diagonal shifted so that entry (0,0) vanishes.
    pub delta_matrix: Matrix3<f64>,
    /// <j|delta - delta_ext|k>.
    pub q_matrix: Matrix3<f64>,
    /// D_21 / D_10.
    pub lambda: f64,
    /// E_C / hbar, rad/ns; sets the bath prefactor.
    pub charging_energy: f64,
}

impl ThreeLevelModel {
    /// Level energies relative to the ground state.
    pub fn level_energies(&self) -> [f64; 3] {
        [0.0, self.omega0, self.omega1]
    }

    /// Drive operator normalized so that the 0-1 element is one.
    pub fn drive_operator(&self) -> Matrix3<f64> {
        self.delta_matrix / self.delta_matrix[(1, 0)]
    }

    /// Model built directly from level frequencies and matrices.
    pub fn from_parts(
        omega0: f64,
        omega1: f64,
        delta_matrix: Matrix3<f64>,
        q_matrix: Matrix3<f64>,
        charging_energy: f64,
    ) -> Self {
        let d00 = delta_matrix[(0, 0)];
        let mut d = delta_matrix;
        for i in 0..3 {
            d[(i, i)] -= d00;
        }
        Self {
            omega0,
            omega1,
            anharmonicity: omega1 - 2.0 * omega0,
            lambda: d[(2, 1)] / d[(1, 0)],
            delta_matrix: d,
            q_matrix,
            charging_energy,
        }
    }
}

/// Build the three-level model from the three lowest shallow-well states.
///
/// Levels 1 and 2 are re-signed so that the ladder elements D_10 and D_21 are
/// positive, independent of the wavefunction sign convention.
pub fn three_level_model(
    solution: &SpectralSolution,
    shallow: &[usize],
    params: &CircuitParams,
    phase_bias: f64,
) -> Result<ThreeLevelModel> {
    if shallow.len() < 3 {
        return Err(Error::InsufficientShallowLevels { found: shallow.len() });
    }
    let idx = [shallow[0], shallow[1], shallow[2]];
    let mut d = Matrix3::zeros();
    let mut q = Matrix3::zeros();
    for a in 0..3 {
        for b in a..3 {
            let dab = solution.matrix_element(idx[a], idx[b], |x| x);
            let qab = solution.matrix_element(idx[a], idx[b], |x| x - phase_bias);
            d[(a, b)] = dab;
            d[(b, a)] = dab;
            q[(a, b)] = qab;
            q[(b, a)] = qab;
        }
    }
    // Ladder sign convention: D_10 > 0 and D_21 > 0.
    let mut sign = [1.0, 1.0, 1.0];
    if d[(1, 0)] < 0.0 {
        sign[1] = -1.0;
    }
    if sign[1] * d[(2, 1)] < 0.0 {
        sign[2] = -1.0;
    }
    for a in 0..3 {
        for b in 0..3 {
            d[(a, b)] *= sign[a] * sign[b];
            q[(a, b)] *= sign[a] * sign[b];
        }
    }
    let e = &solution.energies;
    Ok(ThreeLevelModel::from_parts(
        e[idx[1]] - e[idx[0]],
        e[idx[2]] - e[idx[0]],
        d,
        q,
        params.charging_energy(),
    ))
}

/// Knobs for the spectrum stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSettings {
    pub grid_points: usize,
    pub margin: f64,
    pub levels: usize,
    pub shallow_threshold: f64,
    /// Refinement doublings allowed after a GridTooCoarse failure.
    pub max_refinements: usize,
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        Self {
            grid_points: PhaseGrid::DEFAULT_POINTS,
            margin: PhaseGrid::DEFAULT_MARGIN,
            levels: 10,
            shallow_threshold: SHALLOW_THRESHOLD,
            max_refinements: 4,
        }
    }
}

/// Everything produced by the circuit stage.
#[derive(Debug, Clone)]
pub struct CircuitAnalysis {
    pub params: CircuitParams,
    pub geometry: WellGeometry,
    pub solution: SpectralSolution,
    pub shallow: Vec<usize>,
    pub model: ThreeLevelModel,
}

/// Full pipeline from circuit constants to the three-level model, refining
/// the grid automatically while the spectrum is not converged.
pub fn analyze_circuit(params: &CircuitParams, settings: &SpectrumSettings) -> Result<CircuitAnalysis> {
    params.validate()?;
    let geometry = well_geometry(params)?;
    let mut grid = PhaseGrid::covering(&geometry, settings.margin, settings.grid_points)?;
    let mut attempt = 0;
    let solution = loop {
        match solve_spectrum(params, &grid, settings.levels) {
            Ok(s) => break s,
            Err(Error::GridTooCoarse { .. }) if attempt < settings.max_refinements => {
                grid = grid.refined();
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    };
    let shallow = classify_shallow(&solution, &geometry, settings.shallow_threshold)?;
    let model = three_level_model(&solution, &shallow, params, geometry.phase_bias)?;
    Ok(CircuitAnalysis { params: *params, geometry, solution, shallow, model })
}
