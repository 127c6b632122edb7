//! `ccmcf`: run distance, WDM and stability sweeps or the delay calibration.
//!
//! Exit status is 0 on success, 2 when some sweep points failed (the rest
//! are still reported) and 1 on configuration or output errors.

use std::path::PathBuf;
use std::process::ExitCode;

use ccmcf::harness::{
    emit_outputs, load_config, run_calibration, run_distance_sweep, run_stability_sweep, run_wdm_sweep,
    ExperimentConfig, SweepReport,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ccmcf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment config; built-in defaults when omitted. Keys can be
    /// overridden with CCMCF_<SECTION>__<KEY>=<value>.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, replaces run.master_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, replaces output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Paper-scale run: 24 spatial channels and all 31 WDM slots.
    #[arg(long, global = true)]
    full: bool,

    /// Worker threads (0 = all cores), replaces run.workers.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Memory length and rms MDL versus span count, with fits.
    Distance,
    /// Per-wavelength rates across the WDM comb.
    Wdm,
    /// Repeated measurements at a fixed distance.
    Stability,
    /// Monte Carlo section-delay calibration, written to calibration.toml.
    Calibrate,
}

fn configure(cli: &Cli) -> ccmcf::Result<ExperimentConfig> {
    let mut config = load_config(cli.config.as_deref(), std::env::vars())?;
    if let Some(seed) = cli.seed {
        config.run.master_seed = seed;
    }
    if let Some(w) = cli.workers {
        config.run.workers = w;
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.to_string_lossy().into_owned();
    }
    if cli.full {
        log::warn!("--full: 24 spatial channels and 31 WDM slots; expect hours of runtime and several GB of memory");
        config.apply_full();
    }
    config.validate()?;
    Ok(config)
}

fn sweep(command: Command, config: &ExperimentConfig) -> ccmcf::Result<SweepReport> {
    match command {
        Command::Distance => run_distance_sweep(config),
        Command::Wdm => run_wdm_sweep(config),
        Command::Stability => run_stability_sweep(config),
        Command::Calibrate => unreachable!("calibration is not a sweep"),
    }
}

fn run(cli: &Cli) -> ccmcf::Result<bool> {
    let config = configure(cli)?;
    let dir = PathBuf::from(&config.output.dir);
    if let Command::Calibrate = cli.command {
        let report = run_calibration(&config)?;
        std::fs::create_dir_all(&dir).map_err(|e| ccmcf::Error::Config(format!("{}: {e}", dir.display())))?;
        let path = dir.join("calibration.toml");
        std::fs::write(&path, report.to_toml())
            .map_err(|e| ccmcf::Error::Config(format!("{}: {e}", path.display())))?;
        for e in &report.entries {
            println!("S={:>2}  calibration {:.4}  (measured {:.2} ps, target {:.2} ps)", e.modes, e.value, e.measured_width_ps, e.target_width_ps);
        }
        println!("wrote {}", path.display());
        return Ok(true);
    }
    let report = sweep(cli.command, &config)?;
    let paths = emit_outputs(&report, &dir)?;
    println!(
        "{} points ok, {} failed; wrote {}",
        report.points.len(),
        report.failures.len(),
        paths.json.display()
    );
    if let Some(f) = &report.distance_fit {
        println!(
            "a = {:.2} ps/sqrt(km), exponent {:.3} (R^2 {:.3}), sigma_g = {:.3} dB",
            f.a_ps_per_sqrt_km, f.power_law.exponent, f.power_law.r_squared, f.sigma_g_db
        );
    }
    for t in &report.wdm {
        println!(
            "{} spans: total net {:.2} Tb/s, achievable {:.2} Tb/s over {:.2} THz",
            t.spans,
            t.total_net_tbps,
            t.total_achievable_tbps,
            t.band_hz / 1e12
        );
    }
    if let Some(s) = &report.stability {
        println!(
            "tau_m {:.3} +- {:.3} ns, sigma_rms {:.3} +- {:.3} dB",
            s.tau_m_mean_ns, s.tau_m_std_ns, s.sigma_rms_mean_db, s.sigma_rms_std_db
        );
    }
    Ok(!report.has_failures())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
