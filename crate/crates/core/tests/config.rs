mod common;

use phasequbit::bath::{golden_rule_gamma, BathSpec};
use phasequbit::config::*;
use phasequbit::propagator::DissipationMode;
use phasequbit::pulses::PulseFamily;
use phasequbit::Error;

fn shipped(name: &str) -> String {
    std::fs::read_to_string(format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn every_shipped_config_parses() {
    for name in ["paper_defaults.toml", "alpha_sweep.toml", "relaxation.toml", "gate_time_sweep.toml", "temperature_sweep.toml"] {
        parse_config(&shipped(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    let cfg = parse_config(&shipped("gate_time_sweep.toml")).unwrap();
    let sweep = cfg.sweep.unwrap();
    assert_eq!(sweep.axis, SweepAxis::GateTime);
    assert_eq!(sweep.families.len(), 3);
    assert_eq!(sweep.modes, vec![DissipationMode::Off, DissipationMode::Full]);
}

#[test]
fn defaults_are_applied() {
    let cfg = parse_config("").unwrap();
    assert_eq!(cfg.pulse.sigma_ratio, 0.5);
    assert_eq!(cfg.pulse.family, PulseFamily::DragDetuned);
    assert_eq!(cfg.pulse.alpha, None);
    assert_eq!(cfg.bath.omega_s_over_omega0, 20.0);
    assert!(cfg.bath.counterterm);
    assert_eq!(cfg.numerics.dissipation_mode, DissipationMode::Off);
    let m = common::model();
    let p = cfg.pulse.params(PulseFamily::DragFixedAlpha, 250.0, m);
    assert!((p.effective_alpha(m) - m.lambda * m.lambda / 4.0).abs() < 1e-15);
    assert!((p.sigma - 0.5 * p.gate_time).abs() < 1e-15);
    assert!((p.gate_time * m.omega0 - 250.0).abs() < 1e-9);
}

#[test]
fn empty_sweep_section_needs_an_axis() {
    match parse_config("[sweep]\n") {
        Err(Error::Validation(msg)) => assert_eq!(msg, "sweep axis required"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(parse_config("").unwrap().sweep_for(SweepAxis::Alpha).is_err());
}

#[test]
fn duplicate_and_unknown_keys_are_parse_errors() {
    let dup = parse_config("[pulse]\ntg_omega0 = 250\ntg_omega0 = 300\n");
    assert!(matches!(dup, Err(Error::Parse(_))), "{dup:?}");
    let unknown = parse_config("[bath]\nxii = 2\n");
    match unknown {
        Err(Error::Parse(msg)) => assert!(msg.contains("xii"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
    let broken = parse_config("[circuit\n");
    match broken {
        Err(Error::Parse(msg)) => assert!(msg.contains("line"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn validation_errors_name_the_key() {
    let cases = [
        ("[bath]\nxi = -1\n", "bath.xi"),
        ("[pulse]\ntg_omega0 = 0\n", "pulse.tg_omega0"),
        ("[pulse]\nfamily = \"square\"\n", "pulse.family"),
        ("[numerics]\ndissipation_mode = \"lindblad\"\n", "numerics.dissipation_mode"),
        ("[numerics]\nrecord_stride = 0\n", "numerics.record_stride"),
        ("[sweep]\naxis = \"alpha\"\nstart = 1.0\nstop = 0.0\npoints = 3\n", "sweep"),
        ("[sweep]\naxis = \"alpha\"\nstart = 0.0\nstop = 1.0\n", "sweep.points"),
        ("[sweep]\naxis = \"flux\"\nstart = 0.0\nstop = 1.0\npoints = 3\n", "sweep.axis"),
        ("[sweep]\naxis = \"gate_time\"\nstart = 0.0\nstop = 1.0\npoints = 3\n", "sweep.start"),
        ("[sweep]\naxis = \"alpha\"\nstart = 0.0\nstop = 1.0\npoints = 3\nfamilies = []\n", "sweep.families"),
    ];
    for (text, key) in cases {
        match parse_config(text) {
            Err(Error::Validation(msg)) => assert!(msg.starts_with(key), "{text}: {msg}"),
            other => panic!("{text}: unexpected {other:?}"),
        }
    }
    assert!(matches!(parse_config("[circuit]\nbeta_l = 0.5\n"), Err(Error::NoDoubleWell(_))));
    assert!(matches!(parse_config("[circuit]\nflux_fraction = 1.5\n"), Err(Error::NoShallowWell(_))));
}

#[test]
fn config_errors_map_to_the_config_exit_class() {
    assert!(parse_config("[sweep]\n").unwrap_err().is_config_error());
    assert!(parse_config("a = = 1").unwrap_err().is_config_error());
    assert!(!Error::MismatchedRuns.is_config_error());
    assert!(!Error::CalibrationMismatch { relative: 0.1 }.is_config_error());
}

#[test]
fn hash_ignores_key_order_and_formatting() {
    let a = "[pulse]\nfamily = \"gaussian\"\ntg_omega0 = 300\n\n[bath]\nxi = 1.5\ntemperature_over_hbar_omega0 = 0.1\n";
    let b = "[bath]\ntemperature_over_hbar_omega0 = 0.1\n# comment\nxi = 1.5\n[pulse]\ntg_omega0 = 300.0\nfamily = \"gaussian\"\n";
    let (ca, cb) = (parse_config(a).unwrap(), parse_config(b).unwrap());
    assert_eq!(ca.hash(), cb.hash());
    assert_eq!(ca.hash().len(), 64);
    assert_eq!(ca.short_hash(), ca.hash()[..12]);
    let c = parse_config("[bath]\nxi = 1.5\n").unwrap();
    assert_ne!(ca.hash(), c.hash());
    // The echo is valid JSON.
    let v: serde_json::Value = serde_json::from_str(&ca.canonical_json()).unwrap();
    assert_eq!(v["pulse"]["family"], "gaussian");
}

#[test]
fn sweep_values_span_the_range() {
    let cfg = parse_config("[sweep]\naxis = \"gate_time\"\nstart = 100\nstop = 400\npoints = 7\n").unwrap();
    let v = cfg.sweep_for(SweepAxis::GateTime).unwrap().values();
    assert_eq!(v, vec![100.0, 150.0, 200.0, 250.0, 300.0, 350.0, 400.0]);
    assert!(cfg.sweep_for(SweepAxis::Temperature).is_err());
}

#[test]
fn calibration_inverts_the_golden_rule() {
    let m = common::model();
    let unit = BathSpec::in_model_units(1.0, 20.0, 0.0, m).unwrap();
    let g1 = golden_rule_gamma(m, &unit);
    assert!((calibrate_xi(m, 20.0, 1.0 / g1).unwrap() - 1.0).abs() < 1e-12);
    let a = calibrate_xi(m, 20.0, 700.0).unwrap();
    let b = calibrate_xi(m, 20.0, 350.0).unwrap();
    assert!((b / a - 2.0).abs() < 1e-12);
    assert!(calibrate_xi(m, 20.0, 0.0).is_err());
    // ~1.2e-5: five orders below the literal value 2 in these units.
    assert!(a > 1e-6 && a < 1e-4, "{a}");
}

#[test]
fn reference_units_scale_the_coupling() {
    let m = common::model();
    let cfg = parse_config("[bath]\nxi = 2\nxi_reference_t1_ns = 700\n").unwrap();
    let literal = cfg.bath.literal_xi(m).unwrap();
    assert!((literal - calibrate_xi(m, 20.0, 700.0).unwrap()).abs() < 1e-18);
    let half = cfg.bath.literal_xi_for(1.0, m).unwrap();
    assert!((half - 0.5 * literal).abs() < 1e-18);
    let plain = parse_config("[bath]\nxi = 2\n").unwrap();
    assert_eq!(plain.bath.literal_xi(m).unwrap(), 2.0);
    let spec = cfg.bath.spec(m).unwrap();
    assert!((golden_rule_gamma(m, &spec) * 700.0 - 1.0).abs() < 1e-12);
}
