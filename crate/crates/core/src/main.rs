use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use phasequbit::bath::golden_rule_gamma;
use phasequbit::config::{calibrate_xi, parse_config, RunConfig};
use phasequbit::experiments::{
    fit_decay_rate, run_alpha_sweep, run_gate_time_sweep, run_relaxation, run_temperature_sweep, run_xi_sweep,
    write_output, Setup, SweepRecord,
};
use phasequbit::propagator::DissipationMode;
use phasequbit::{Error, Result};

#[derive(Parser)]
#[command(name = "phasequbit", version, about = "Gate-error simulator for a flux-biased phase qubit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; built-in reference values when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweep points.
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Override the dissipation mode of the configuration.
    #[arg(long, value_parser = ["off", "full", "markov"])]
    dissipation: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the three-level model extracted from the circuit.
    Model(Common),
    /// Free relaxation from |1> with a fitted T1.
    Relax(Common),
    /// Gate error versus alpha for the fixed-frequency two-quadrature pulse.
    AlphaSweep(Common),
    /// Gate error versus gate time.
    GateSweep(Common),
    /// Gate error versus temperature.
    TempSweep(Common),
    /// Gate error versus coupling strength.
    XiSweep(Common),
    /// Coupling that yields a target T1, checked by a relaxation run.
    CalibrateXi {
        #[command(flatten)]
        common: Common,
        /// Target relaxation time (ns).
        #[arg(long, default_value_t = 700.0)]
        t1_ns: f64,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn load(common: &Common) -> Result<RunConfig> {
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(mode) = &common.dissipation {
        let mode: DissipationMode = mode.parse()?;
        cfg.numerics.dissipation_mode = mode;
        if let Some(sweep) = cfg.sweep.as_mut() {
            sweep.modes = vec![mode];
        }
    }
    Ok(cfg)
}

fn finish_sweep(record: SweepRecord, common: &Common) -> Result<()> {
    let path = record.write(&common.out)?;
    for line in &record.summary {
        println!("{line}");
    }
    println!("wrote {} ({} rows, {:.1} s)", path.display(), record.rows.len(), record.wall_time_s);
    let failures = record.failures();
    if failures > 0 {
        let first = record.rows.iter().find_map(|r| r.outcome.as_ref().err()).cloned();
        eprintln!("{failures} sweep point(s) failed");
        return Err(first.expect("a failed row"));
    }
    Ok(())
}

fn model_report(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let setup = Setup::new(cfg)?;
    let m = setup.model();
    let a = &setup.analysis;
    println!("E_C/hbar   = {:.6} rad/ns", a.params.charging_energy());
    println!("E_J/hbar   = {:.3} rad/ns", a.params.josephson_energy());
    println!("omega0     = {:.6} rad/ns ({:.4} GHz)", m.omega0, m.omega0 / (2.0 * std::f64::consts::PI));
    println!("omega1     = {:.6} rad/ns", m.omega1);
    println!("Delta      = {:.6} rad/ns (Delta/omega0 = {:.5})", m.anharmonicity, m.anharmonicity / m.omega0);
    println!("lambda     = {:.6}", m.lambda);
    println!("shallow    = {:?} of {} computed levels", a.shallow, a.solution.energies.len());
    println!("D (phase matrix, D00 = 0):\n{:.6}", m.delta_matrix);
    println!("q:\n{:.6}", m.q_matrix);
    let bath = setup.config.bath.spec(m)?;
    if bath.xi > 0.0 {
        let gamma = golden_rule_gamma(m, &bath);
        println!("Gamma      = {gamma:.6e} /ns (T1 = {:.4e} ns) at xi = {:.6e}", 1.0 / gamma, bath.xi);
    }
    let path = write_output(&common.out, "spectrum", &setup.config.hash(), &a.solution.to_csv(&a.shallow[..3]))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn relax(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let setup = Setup::new(cfg)?;
    let rec = run_relaxation(&setup)?;
    let path = rec.write(&common.out)?;
    println!("golden-rule Gamma = {:.6e} /ns (T1 = {:.4e} ns)", rec.gamma, 1.0 / rec.gamma);
    println!("fitted rate       = {:.6e} /ns (T1 = {:.4e} ns)", rec.fitted_rate, rec.fitted_t1());
    println!("wrote {}", path.display());
    Ok(())
}

fn calibrate(common: &Common, t1_ns: f64) -> Result<()> {
    let mut cfg = load(common)?;
    let setup = Setup::new(cfg.clone())?;
    let m = setup.model();
    let xi = calibrate_xi(m, cfg.bath.omega_s_over_omega0, t1_ns)?;
    println!("xi for T1 = {t1_ns} ns: {xi:.6e} (xi = 2 is {:.3e} times stronger)", 2.0 / xi);
    cfg.bath.xi = xi;
    cfg.bath.xi_reference_t1_ns = None;
    cfg.bath.temperature_over_hbar_omega0 = 0.0;
    if cfg.numerics.dissipation_mode == DissipationMode::Off {
        cfg.numerics.dissipation_mode = DissipationMode::Full;
    }
    let check = Setup { config: cfg, analysis: setup.analysis.clone() };
    let rec = run_relaxation(&check)?;
    let rate = fit_decay_rate(&rec.trajectory, check.config.numerics.fit_start_ns);
    let rel = (rate * t1_ns - 1.0).abs();
    println!("relaxation check: fitted T1 = {:.4e} ns (relative deviation {rel:.2e})", 1.0 / rate);
    if rel > 0.05 {
        return Err(Error::CalibrationMismatch { relative: rel });
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Model(c) => model_report(c),
        Command::Relax(c) => relax(c),
        Command::AlphaSweep(c) => finish_sweep(run_alpha_sweep(&Setup::new(load(c)?)?, c.workers)?, c),
        Command::GateSweep(c) => finish_sweep(run_gate_time_sweep(&Setup::new(load(c)?)?, c.workers)?, c),
        Command::TempSweep(c) => finish_sweep(run_temperature_sweep(&Setup::new(load(c)?)?, c.workers)?, c),
        Command::XiSweep(c) => finish_sweep(run_xi_sweep(&Setup::new(load(c)?)?, c.workers)?, c),
        Command::CalibrateXi { common, t1_ns } => calibrate(common, *t1_ns),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
