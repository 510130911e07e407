mod common;

use phasequbit::pulses::*;
use phasequbit::Error;
use std::f64::consts::PI;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * i as f64);
    }
    s * h / 3.0
}

#[test]
fn envelope_has_area_pi_and_vanishing_edges() {
    for (tg, ratio) in [(6.3, 0.5), (2.0, 0.25), (10.0, 1.0)] {
        let env = gaussian_envelope(tg, ratio * tg).unwrap();
        assert!(env.value(0.0).abs() < 1e-12 * env.peak());
        assert!(env.value(tg).abs() < 1e-12 * env.peak());
        let area = simpson(|t| env.value(t), 0.0, tg, 4000);
        assert!((area - PI).abs() < 1e-10, "area {area}");
        assert!((env.area() - PI).abs() < 1e-12);
        assert!((env.peak() - env.value(0.5 * tg)).abs() < 1e-12);
    }
}

#[test]
fn envelope_closed_forms_match_quadrature() {
    let env = gaussian_envelope(6.0, 3.0).unwrap();
    for t in [0.7, 3.0, 5.2, 6.0] {
        let sq = simpson(|s| env.value(s).powi(2), 0.0, t, 4000);
        assert!((env.square_integral(t) - sq).abs() < 1e-10 * sq.max(1e-3));
    }
    let h = 1e-5;
    for t in [0.5, 2.0, 4.5] {
        let fd = (env.value(t + h) - env.value(t - h)) / (2.0 * h);
        assert!((env.derivative(t) - fd).abs() < 1e-6 * env.peak());
    }
}

#[test]
fn drive_is_zero_outside_the_gate_window() {
    let m = common::model();
    for family in PulseFamily::ALL {
        let p = PulseProgram::new(&common::pulse(family, 250.0), m).unwrap();
        let tg = p.gate_time();
        assert_eq!(p.drive(-1e-3), 0.0);
        assert_eq!(p.drive(tg * 1.001), 0.0);
        assert!(matches!(p.lab_frame_drive(tg + 1.0), Err(Error::OutOfWindow { .. })));
        assert!(p.lab_frame_drive(0.5 * tg).is_ok());
    }
}

#[test]
fn fixed_alpha_at_zero_is_the_gaussian_pulse() {
    let m = common::model();
    let g = PulseProgram::new(&common::pulse(PulseFamily::Gaussian, 250.0), m).unwrap();
    let f = PulseProgram::new(&common::pulse(PulseFamily::DragFixedAlpha, 250.0).with_alpha(0.0), m).unwrap();
    let tg = g.gate_time();
    for i in 0..=200 {
        let t = tg * i as f64 / 200.0;
        assert_eq!(g.drive(t), f.drive(t));
    }
    assert_eq!(g.carrier.final_phase(), f.carrier.final_phase());
}

#[test]
fn drag_quadratures_follow_the_envelope() {
    let m = common::model();
    let p = PulseProgram::new(&common::pulse(PulseFamily::DragDetuned, 250.0), m).unwrap();
    let l2 = m.lambda * m.lambda;
    let d = m.anharmonicity;
    for t in [0.3, 1.7, 3.1, 5.9] {
        let w = p.envelope.value(t);
        let (x, y) = p.quadratures.evaluate(t);
        assert!((x - (w + (l2 - 4.0) * w.powi(3) / (8.0 * d * d))).abs() < 1e-12 * w.abs().max(1.0));
        assert!((y + p.envelope.derivative(t) / d).abs() < 1e-12);
        let d1 = (l2 - 4.0) * w * w / (4.0 * d);
        assert!((p.detuning_at(t) - d1).abs() < 1e-12);
    }
}

#[test]
fn default_alpha_is_a_quarter_lambda_squared() {
    let m = common::model();
    let p = common::pulse(PulseFamily::DragFixedAlpha, 250.0);
    assert!((p.effective_alpha(m) - m.lambda * m.lambda / 4.0).abs() < 1e-15);
    assert_eq!(p.with_alpha(0.3).effective_alpha(m), 0.3);
    assert_eq!(common::pulse(PulseFamily::Gaussian, 250.0).effective_alpha(m), 0.0);
}

#[test]
fn carrier_phase_integrates_the_detuning() {
    let m = common::model();
    let p = PulseProgram::new(&common::pulse(PulseFamily::DragDetuned, 250.0), m).unwrap();
    let tg = p.gate_time();
    let det = p.detuning.unwrap();
    for t in [0.0, 0.37 * tg, 0.5 * tg, tg] {
        let expected = m.omega0 * t - det.integral(t);
        let numeric = simpson(|s| m.omega0 - p.detuning_at(s), 0.0, t.max(1e-12), 20000);
        assert!((p.phase(t) - expected).abs() < 1e-10, "t = {t}");
        assert!((numeric - expected).abs() < 1e-9);
    }
    assert!((p.phase(tg + 1.0) - p.phase(tg) - m.omega0).abs() < 1e-10);

    let g = PulseProgram::new(&common::pulse(PulseFamily::Gaussian, 250.0), m).unwrap();
    assert_eq!(g.carrier.final_phase(), m.omega0 * g.gate_time());
}

#[test]
fn invalid_pulses_are_rejected() {
    let m = common::model();
    assert!(matches!(PulseProgram::new(&PulseParams::new(PulseFamily::Gaussian, -1.0), m), Err(Error::InvalidPulse(_))));
    assert!(PulseProgram::new(&PulseParams::new(PulseFamily::Gaussian, 5.0).with_sigma(0.0), m).is_err());
    assert!(PulseProgram::new(&PulseParams::new(PulseFamily::DragFixedAlpha, 5.0).with_alpha(-0.5), m).is_err());
    assert!("triangle".parse::<PulseFamily>().is_err());
    for f in PulseFamily::ALL {
        assert_eq!(f.name().parse::<PulseFamily>().unwrap(), f);
    }
}

#[test]
fn zero_anharmonicity_is_rejected_for_drag() {
    let mut m = common::model().clone();
    m.anharmonicity = 0.0;
    let p = PulseParams::new(PulseFamily::DragDetuned, 6.0);
    assert!(matches!(PulseProgram::new(&p, &m), Err(Error::ZeroAnharmonicity)));
    assert!(PulseProgram::new(&PulseParams::new(PulseFamily::Gaussian, 6.0), &m).is_ok());
}

#[test]
fn csv_export_samples_the_window() {
    let m = common::model();
    let p = PulseProgram::new(&common::pulse(PulseFamily::DragDetuned, 150.0), m).unwrap();
    let csv = p.to_csv(11);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,omega_x,omega_y,theta,d1");
    assert_eq!(lines.len(), 12);
    let last: Vec<f64> = lines[11].split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[0] - p.gate_time()).abs() < 1e-9);
}
