mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "oamplab", version, about = "OAMP detection and capacity experiments")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (montecarlo.master_seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores (montecarlo.workers).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (output.directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report rates in bits (default).
    #[arg(long, global = true, conflicts_with = "nats")]
    bits: bool,
    /// Report rates in nats.
    #[arg(long, global = true)]
    nats: bool,
    /// Overrides a config key, e.g. `--set system.kappa=50`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Write the channel spectrum.
    Spectrum,
    /// State-evolution trajectory from v = 1.
    SeTrace,
    /// Fixed point of state evolution.
    FixedPoint,
    /// Replica capacity, by both routes.
    Capacity,
    /// Every area of the transfer-curve diagram.
    Areas,
    /// Rate from the area under a code transfer curve.
    Rate,
    /// Whether a code curve fits under the detection envelope.
    MatchCheck,
    /// Monte-Carlo estimate of a code's transfer curve.
    CodeCurve,
    /// Uncoded BER sweep.
    SimUncoded,
    /// Coded BER sweep.
    SimCoded,
    /// Detector trajectories against state evolution.
    Conformance,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::SeTrace => "se-trace",
            Command::FixedPoint => "fixed-point",
            Command::Capacity => "capacity",
            Command::Areas => "areas",
            Command::Rate => "rate",
            Command::MatchCheck => "match-check",
            Command::CodeCurve => "code-curve",
            Command::SimUncoded => "sim-uncoded",
            Command::SimCoded => "sim-coded",
            Command::Conformance => "conformance",
        }
    }
}

fn resolve(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("montecarlo.master_seed={s}"));
    }
    if let Some(w) = cli.workers {
        overrides.push(format!("montecarlo.workers={w}"));
    }
    if let Some(o) = &cli.out {
        overrides.push(format!("output.directory={}", toml::Value::String(o.display().to_string())));
    }
    if cli.bits {
        overrides.push("output.units=\"bits\"".into());
    }
    if cli.nats {
        overrides.push("output.units=\"nats\"".into());
    }
    ExperimentConfig::load(cli.config.as_deref(), &overrides)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = resolve(cli)?;
    if cfg.montecarlo.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.montecarlo.workers)
            .build_global()?;
    }
    let out = commands::Output::create(&cfg, cli.command.name())?;
    match cli.command {
        Command::Spectrum => commands::spectrum(&cfg, &out),
        Command::SeTrace => commands::se_trace(&cfg, &out),
        Command::FixedPoint => commands::fixed_point(&cfg, &out),
        Command::Capacity => commands::capacity(&cfg, &out),
        Command::Areas => commands::areas(&cfg, &out),
        Command::Rate => commands::rate(&cfg, &out),
        Command::MatchCheck => commands::match_check_sweep(&cfg, &out),
        Command::CodeCurve => commands::code_curve(&cfg, &out),
        Command::SimUncoded => commands::sim_uncoded(&cfg, &out),
        Command::SimCoded => commands::sim_coded(&cfg, &out),
        Command::Conformance => commands::conformance(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
