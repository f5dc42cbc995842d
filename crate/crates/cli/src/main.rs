mod args;
mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};
use output::Output;

/// Parses argv, then reparses with the config file entries appended so that
/// they take precedence over flags given on the command line.
fn parse() -> Cli {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let cli = Cli::parse_from(&argv);
    let Some(path) = cli.config.clone() else {
        return cli;
    };
    match config::config_args(&path) {
        Ok(extra) => Cli::parse_from(argv.into_iter().chain(extra)),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let out = Output::new(&cli.output_dir, cli.seed)?;
    let seed = cli.seed;
    match &cli.command {
        Command::Simulate(a) => commands::simulate_cmd(a, seed, &out),
        Command::Decompose(a) => commands::decompose_cmd(a, seed, &out),
        Command::Kpca(a) => commands::kpca_cmd(a, seed, &out),
        Command::AeTrain(a) => commands::ae_train_cmd(a, seed, &out),
        Command::AeDecompose(a) => commands::ae_decompose_cmd(a, seed, &out),
        Command::Dhsic(a) => commands::dhsic_cmd(a, seed, &out),
        Command::TvdCurve(a) => commands::tvd_curve_cmd(a, seed, &out),
        Command::SkgMp(a) => commands::skg_mp_cmd(a, seed, &out),
        Command::FitDist(a) => commands::fit_dist_cmd(a, seed, &out),
        Command::Sweep(a) => commands::sweep_cmd(a, seed, &out),
        Command::Compare(a) => commands::compare_cmd(a, seed, &out),
        Command::Run(a) => commands::run_cmd(a, seed, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
