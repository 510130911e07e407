mod common;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use proptest::prelude::*;

use phasequbit::bath::build_kernel_tables;
use phasequbit::circuit::{analyze_circuit, well_geometry, CircuitParams, SpectrumSettings};
use phasequbit::config::parse_config;
use phasequbit::metrics::gate_fidelity;
use phasequbit::propagator::*;
use phasequbit::pulses::{gaussian_envelope, PulseFamily, PulseParams, PulseProgram};

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * i as f64);
    }
    s * h / 3.0
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn ket_strategy() -> impl Strategy<Value = Vector3<Complex64>> {
    prop::array::uniform6(-1.0f64..1.0)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-2)
        .prop_map(|v| {
            let k = Vector3::new(c(v[0], v[1]), c(v[2], v[3]), c(v[4], v[5]));
            k / c(k.norm(), 0.0)
        })
}

fn density_strategy() -> impl Strategy<Value = CMatrix3> {
    prop::array::uniform18(-1.0f64..1.0).prop_map(|v| {
        let a = Matrix3::from_fn(|j, k| c(v[2 * (3 * j + k)], v[2 * (3 * j + k) + 1]));
        let m = a * a.adjoint() + CMatrix3::identity() * c(1e-3, 0.0);
        let tr = m.trace();
        m / tr
    })
}

fn projector(k: &Vector3<Complex64>) -> CMatrix3 {
    k * k.adjoint()
}

/// Trajectory pair that starts in |0> and |1> and ends in the given states.
fn fake_pair(end0: CMatrix3, end1: CMatrix3, gate_time: f64) -> (Trajectory, Trajectory) {
    let m = common::model();
    let cfg = SimulationConfig::fitted(m, f64::INFINITY, gate_time, DissipationMode::Off);
    let base = evolve(&DensityMatrix::pure(0), m, None, None, &cfg).unwrap();
    let mut a = base.clone();
    *a.states.last_mut().unwrap() = end0;
    let mut b = base;
    let start1 = *DensityMatrix::pure(1).matrix();
    for s in b.states.iter_mut() {
        *s = start1;
    }
    *b.states.last_mut().unwrap() = end1;
    (a, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelope_area_and_edges(tg in 0.5f64..30.0, ratio in 0.15f64..1.5) {
        let env = gaussian_envelope(tg, ratio * tg).unwrap();
        prop_assert_eq!(env.value(0.0), 0.0);
        prop_assert_eq!(env.value(tg), 0.0);
        let area = simpson(|t| env.value(t), 0.0, tg, 6000);
        prop_assert!((area / std::f64::consts::PI - 1.0).abs() < 1e-10, "area {}", area);
    }

    #[test]
    fn barrier_shrinks_with_flux(f1 in 0.80f64..0.99, gap in 0.001f64..0.05) {
        let r = CircuitParams::reference();
        let f2 = (f1 + gap).min(0.999);
        prop_assume!(f2 > f1);
        let low = CircuitParams { flux_fraction: f1, ..r };
        let high = CircuitParams { flux_fraction: f2, ..r };
        prop_assert!(well_geometry(&high).unwrap().barrier_height < well_geometry(&low).unwrap().barrier_height);
    }

    #[test]
    fn fidelity_is_bounded(end0 in density_strategy(), end1 in density_strategy()) {
        let m = common::model();
        let tg = 1.0;
        let (a, b) = fake_pair(end0, end1, tg);
        let r = gate_fidelity(&a, &b, tg, m.omega0 * tg, m).unwrap();
        prop_assert!(r.fidelity >= -1e-12 && r.fidelity <= 1.0 + 1e-9, "F = {}", r.fidelity);
        prop_assert!((0.0..=1.0).contains(&r.leakage));
    }

    #[test]
    fn fidelity_ignores_a_global_phase(k0 in ket_strategy(), k1 in ket_strategy(), phase in 0.0f64..6.3) {
        let m = common::model();
        let tg = 1.0;
        let u = c(phase.cos(), phase.sin());
        let (a, b) = fake_pair(projector(&k0), projector(&k1), tg);
        let (pa, pb) = fake_pair(projector(&(k0 * u)), projector(&(k1 * u)), tg);
        let f = gate_fidelity(&a, &b, tg, m.omega0 * tg, m).unwrap().fidelity;
        let g = gate_fidelity(&pa, &pb, tg, m.omega0 * tg, m).unwrap().fidelity;
        prop_assert!((f - g).abs() < 1e-14);
    }

    #[test]
    fn config_hash_ignores_key_order(perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(), bath_first in any::<bool>()) {
        let pulse_keys = ["family = \"drag_fixed_alpha\"", "tg_omega0 = 275", "sigma_ratio = 0.45", "alpha = 0.4"];
        let bath_keys = ["xi = 1.25", "temperature_over_hbar_omega0 = 0.05"];
        let pulse: Vec<&str> = perm.iter().map(|&i| pulse_keys[i]).collect();
        let bath: Vec<&str> = if perm[0] % 2 == 0 { bath_keys.to_vec() } else { bath_keys.iter().rev().copied().collect() };
        let pulse = format!("[pulse]\n{}\n", pulse.join("\n"));
        let bath = format!("[bath]\n{}\n", bath.join("\n"));
        let shuffled = if bath_first { format!("{bath}\n{pulse}") } else { format!("{pulse}\n{bath}") };
        let reference = format!("[bath]\n{}\n[pulse]\n{}\n", bath_keys.join("\n"), pulse_keys.join("\n"));
        prop_assert_eq!(parse_config(&shuffled).unwrap().hash(), parse_config(&reference).unwrap().hash());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn coupling_matrices_are_symmetric(f in 0.93f64..0.96) {
        let p = CircuitParams { flux_fraction: f, ..CircuitParams::reference() };
        let a = analyze_circuit(&p, &SpectrumSettings::default()).unwrap();
        let (d, q) = (a.model.delta_matrix, a.model.q_matrix);
        prop_assert!((d - d.transpose()).abs().max() < 1e-12);
        prop_assert!((q - q.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn tables_scale_linearly_with_coupling(scale in 0.01f64..100.0, temp in 0.0f64..0.3) {
        let m = common::model();
        let one = common::bath(1.0, 20.0, temp);
        let (t1, cfg) = common::tables(&one, 0.2);
        let ts = build_kernel_tables(m, &one.with_xi(scale), cfg.dt, 0.2).unwrap();
        for t in [0.013, 0.1, 0.2] {
            let (a, b) = (t1.at(t).unwrap(), ts.at(t).unwrap());
            for n in 0..a.len() {
                prop_assert!((b[n] - a[n] * scale).norm() <= 1e-12 * (a[n].norm() * scale).max(1e-300));
            }
        }
    }

    #[test]
    fn dissipative_evolution_keeps_trace_and_hermiticity(rho in density_strategy(), temp in 0.0f64..0.2) {
        let m = common::model();
        let bath = common::bath(50.0 * common::xi_700(), 20.0, temp);
        let (tables, cfg) = common::tables(&bath, 0.5);
        let program = PulseProgram::new(&PulseParams::new(PulseFamily::DragDetuned, 0.5), m).unwrap();
        let tr = evolve(&DensityMatrix::new(rho).unwrap(), m, Some(&program), Some(&tables), &cfg).unwrap();
        for s in &tr.states {
            prop_assert!((s.trace().re - 1.0).abs() < 1e-9);
            prop_assert!(s.trace().im.abs() < 1e-9);
            prop_assert!(hermiticity_residual(s) < 1e-9);
        }
        prop_assert!(tr.diagnostics.max_hermiticity_residual < 1e-9);
    }

    #[test]
    fn coupling_offset_is_a_gauge(shift in -5.0f64..5.0, rho in density_strategy()) {
        let m = common::model();
        let mut shifted = m.clone();
        shifted.q_matrix += Matrix3::identity() * shift;
        let bath = common::bath(50.0 * common::xi_700(), 20.0, 0.1);
        let (tables, cfg) = common::tables(&bath, 0.5);
        let program = PulseProgram::new(&PulseParams::new(PulseFamily::DragDetuned, 0.5), m).unwrap();
        let start = DensityMatrix::new(rho).unwrap();
        let a = evolve(&start, m, Some(&program), Some(&tables), &cfg).unwrap();
        let b = evolve(&start, &shifted, Some(&program), Some(&tables), &cfg).unwrap();
        prop_assert!(common::max_entry_diff(&a, &b) < 1e-10);
    }

    #[test]
    fn coherent_evolution_conserves_purity(k in ket_strategy(), tg_omega0 in 100.0f64..400.0, family in 0usize..3) {
        let m = common::model();
        let family = [PulseFamily::Gaussian, PulseFamily::DragFixedAlpha, PulseFamily::DragDetuned][family];
        let params = PulseParams::new(family, tg_omega0 / m.omega0);
        let program = PulseProgram::new(&params, m).unwrap();
        let cfg = SimulationConfig::fitted(m, f64::INFINITY, params.gate_time, DissipationMode::Off);
        let start = DensityMatrix::new(projector(&k)).unwrap();
        let tr = evolve(&start, m, Some(&program), None, &cfg).unwrap();
        prop_assert!(tr.diagnostics.max_purity_drift < 1e-8);
        prop_assert!((purity(tr.final_state()) - 1.0).abs() < 1e-8);
        prop_assert!(min_eigenvalue(tr.final_state()) > -1e-8);
    }
}
