//! Pipeline runner for gyro-free attitude estimation on symmetric
//! accelerometer arrays.
//!
//! Exit codes: 0 success, 2 configuration/input error, 3 runtime numeric or
//! i/o failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::load_config;

#[derive(Parser)]
#[command(name = "smimu", version, about = "Gyro-free attitude estimation from symmetric IMU arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic session (per-IMU CSV logs, truth, manifest).
    Simulate {
        /// Run configuration with an [input.simulate] section.
        #[arg(long)]
        config: PathBuf,
        /// Session output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one estimation pipeline and write solution/report artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured mode (single_imu | gf_baseline | smimu).
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the significance-gate confidence coefficient.
        #[arg(long)]
        alpha_c: Option<f64>,
    },
    /// Run several modes over the identical input and tabulate deltas
    /// against the first mode.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated mode list, e.g. single_imu,gf_baseline,smimu.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the significance-gate confidence coefficient.
        #[arg(long)]
        alpha_c: Option<f64>,
    },
    /// Score an existing solutions CSV against a truth CSV.
    Eval {
        #[arg(long)]
        solutions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-render the SVG plots of a finished run directory.
    Plot {
        #[arg(long)]
        run_dir: PathBuf,
        /// Truth CSV; defaults to `<run_dir>/session/truth.csv`.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, out, seed } => {
            load_config(config, None, *seed, None)
                .and_then(|cfg| commands::simulate(&cfg, &commands::config_dir_of(config), out))
        }
        Command::Run {
            config,
            mode,
            seed,
            out,
            alpha_c,
        } => load_config(config, mode.as_deref(), *seed, out.as_deref()).and_then(|mut cfg| {
            if let Some(alpha) = alpha_c {
                cfg.filter.alpha_c = *alpha;
            }
            commands::run(&cfg, &commands::config_dir_of(config))
        }),
        Command::Compare {
            config,
            modes,
            seed,
            out,
            alpha_c,
        } => load_config(config, None, *seed, out.as_deref()).and_then(|mut cfg| {
            if let Some(alpha) = alpha_c {
                cfg.filter.alpha_c = *alpha;
            }
            commands::compare(&cfg, &commands::config_dir_of(config), modes)
        }),
        Command::Eval {
            solutions,
            truth,
            out,
        } => commands::eval(solutions, truth, out),
        Command::Plot { run_dir, truth } => commands::plot(run_dir, truth.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
