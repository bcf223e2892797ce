//! `snspd`: cavity design, efficiency metrology and timing analysis from
//! config files.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure,
//! 4 insufficient data.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use snspd_core::{Error, ErrorKind};

use crate::commands::{metrology, optics, timing};
use crate::output::{Format, Report};

#[derive(Parser)]
#[command(
    name = "snspd",
    version,
    about = "SNSPD cavity design, efficiency metrology and timing analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config (or the JSON config echoed by an earlier run).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "snspd-out")]
    out: PathBuf,
    /// RNG seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::JsonText)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Reflectance, transmittance and per-layer absorptance of one stack.
    Solve(Common),
    /// Absorption map over air gap and wavelength, with peaks per gap.
    Sweep(Common),
    /// Air gap maximizing weighted absorption at target wavelengths.
    Optimize(Common),
    /// Photon flux at the detector from monitor power and attenuation.
    Flux(Common),
    /// System detection efficiency for a measurement session.
    Sde(Common),
    /// Root-sum-square combination of relative uncertainties.
    Uncertainty(Common),
    /// Dead-time metrics of a recovery curve.
    Deadtime(Common),
    /// Detection efficiency against photon flux.
    Droop(Common),
    /// Seeded time-tag simulation.
    Simulate(Common),
    /// Consecutive-event delay histogram of a time-tag file.
    Autocorr(Common),
    /// Gaussian fit of an instrument-response histogram.
    FitIrf(Common),
}

impl Command {
    fn name_and_args(&self) -> (&'static str, &Common) {
        match self {
            Command::Solve(c) => ("solve", c),
            Command::Sweep(c) => ("sweep", c),
            Command::Optimize(c) => ("optimize", c),
            Command::Flux(c) => ("flux", c),
            Command::Sde(c) => ("sde", c),
            Command::Uncertainty(c) => ("uncertainty", c),
            Command::Deadtime(c) => ("deadtime", c),
            Command::Droop(c) => ("droop", c),
            Command::Simulate(c) => ("simulate", c),
            Command::Autocorr(c) => ("autocorr", c),
            Command::FitIrf(c) => ("fit-irf", c),
        }
    }

    fn run(&self) -> snspd_core::Result<Report> {
        let (_, c) = self.name_and_args();
        let path = c.config.as_path();
        match self {
            Command::Solve(_) => optics::solve(path),
            Command::Sweep(_) => optics::sweep_cmd(path),
            Command::Optimize(_) => optics::optimize(path),
            Command::Flux(_) => metrology::flux(path),
            Command::Sde(_) => metrology::sde(path),
            Command::Uncertainty(_) => metrology::uncertainty(path),
            Command::Deadtime(_) => timing::deadtime(path),
            Command::Droop(_) => timing::droop(path, c.seed),
            Command::Simulate(_) => timing::simulate(path, c.seed),
            Command::Autocorr(_) => timing::autocorr(path),
            Command::FitIrf(_) => timing::fit_irf(path, c.seed),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Input => 2,
        ErrorKind::Numeric => 3,
        ErrorKind::InsufficientData => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, common) = cli.command.name_and_args();
    let outcome = cli
        .command
        .run()
        .and_then(|report| report.emit(&common.out, common.format));
    match outcome {
        Ok(text) => {
            print!("{text}");
            output::log_run(&common.out, name, &common.config, 0, None);
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e}");
            output::log_run(
                &common.out,
                name,
                &common.config,
                code,
                Some(&e.to_string()),
            );
            ExitCode::from(code)
        }
    }
}
