use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ringjsa::commands::{self, CommandError};
use ringjsa::config::{DeviceConfig, PumpKind};
use ringjsa::specfit::DriveMode;

#[derive(Parser)]
#[command(name = "ringjsa", version, about = "Biphoton JSA simulation and device fitting for microring SFWM")]
struct Cli {
    /// Device configuration (JSON).
    #[arg(long, global = true, conflicts_with = "paper_defaults")]
    config: Option<PathBuf>,
    /// Use the built-in published parameter set instead of a config file.
    #[arg(long, global = true)]
    paper_defaults: bool,
    /// Pump kind for --paper-defaults; with --config it must match the file.
    #[arg(long, global = true, value_enum)]
    pump: Option<PumpArg>,
    /// Output directory (default: config `output_dir`, then `ringjsa-out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PumpArg {
    Pulsed,
    Cw,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Pulsed,
    Cw,
}

#[derive(Subcommand)]
enum Command {
    /// Fit envelope and Lorentzian dips of a transmission spectrum.
    FitSpectrum { spectrum: PathBuf },
    /// Compute the model JSA and its Schmidt number.
    Jsa,
    /// Simulate the stimulated-emission measurement and report K_bound.
    Measure,
    /// Fit idler counts against drive power on log-log axes.
    Scaling {
        series: PathBuf,
        /// Drive mode when the series has no JSON sidecar.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// K_bound as a function of the Fabry-Pérot resolution.
    SweepResolution {
        /// Comma-separated filter FWHMs in pm.
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 5.0, 10.0, 20.0, 40.0])]
        fwhm: Vec<f64>,
    },
}

fn out_dir(cli: &Cli, cfg: Option<&DeviceConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("ringjsa-out"))
}

fn config(cli: &Cli) -> Result<DeviceConfig, CommandError> {
    let pump = cli.pump.map(|p| match p {
        PumpArg::Pulsed => PumpKind::Pulsed,
        PumpArg::Cw => PumpKind::Cw,
    });
    commands::load_config(cli.config.as_deref(), cli.paper_defaults, pump, cli.seed)
}

fn run(cli: &Cli) -> Result<Vec<String>, CommandError> {
    match &cli.command {
        Command::FitSpectrum { spectrum } => commands::cmd_fit_spectrum(spectrum, &out_dir(cli, None)),
        Command::Scaling { series, mode } => {
            let mode = mode.map(|m| match m {
                ModeArg::Pulsed => DriveMode::Pulsed,
                ModeArg::Cw => DriveMode::Cw,
            });
            commands::cmd_scaling(series, mode, &out_dir(cli, None))
        }
        Command::Jsa => {
            let cfg = config(cli)?;
            commands::cmd_jsa(&cfg, &out_dir(cli, Some(&cfg)))
        }
        Command::Measure => {
            let cfg = config(cli)?;
            commands::cmd_measure(&cfg, &out_dir(cli, Some(&cfg)))
        }
        Command::SweepResolution { fwhm } => {
            let cfg = config(cli)?;
            commands::cmd_sweep_resolution(&cfg, fwhm, &out_dir(cli, Some(&cfg)))
        }
    }
}

fn init_threads() {
    if let Some(n) = std::env::var("RINGJSA_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    match run(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
