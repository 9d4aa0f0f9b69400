mod args;
mod commands;
mod config;
mod failure;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};
use commands::Context;
use failure::Failure;

fn parse_with_config(argv: Vec<OsString>) -> Result<(Cli, Vec<(String, String)>), Failure> {
    let cmd = Cli::command();
    let matches = cmd.clone().try_get_matches_from(&argv).unwrap_or_else(|e| e.exit());
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let Some(path) = &cli.config else {
        return Ok((cli, Vec::new()));
    };
    let entries = config::load(path)?;
    let overlay = config::overlay(&cmd, &matches, &entries)?;
    if overlay.args.is_empty() {
        return Ok((cli, overlay.sensor_fields));
    }
    let mut merged = argv;
    merged.extend(overlay.args);
    let matches = cmd
        .try_get_matches_from(&merged)
        .map_err(|e| Failure::new("config", "config", e.render().to_string().lines().next().unwrap_or("").to_string()))?;
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Failure::new("config", "config", e.to_string()))?;
    Ok((cli, overlay.sensor_fields))
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn run(argv: Vec<OsString>) -> anyhow::Result<()> {
    let (cli, sensor_fields) = parse_with_config(argv)?;
    init_logging(cli.verbose);
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure::new("config", "config", e.to_string()))?;
    }
    let ctx = Context {
        seed: cli.seed,
        sensor_fields,
    };
    match &cli.command {
        Command::Splat(a) => commands::splat(a),
        Command::Resample(a) => commands::resample(a),
        Command::Pipeline(a) => commands::pipeline(a),
        Command::Simulate(a) => commands::simulate(a, &ctx),
        Command::Eval(a) => commands::eval(a),
        Command::Synth(a) => commands::synth(a, &ctx),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = match e.downcast_ref::<Failure>() {
                Some(f) => f.line(),
                None => Failure::new("run", "internal", format!("{e:#}")).line(),
            };
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
