//! `vpb` - desk-scale experiments on the scaled Vlasov-Poisson-Boltzmann
//! system and its incompressible NSFP limit.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure
//! (NaN or divergence), 4 acceptance-gate failure in audit subcommands.

mod artifacts;
mod config;
mod scenarios;

use anyhow::Result;
use artifacts::ArtifactSink;
use clap::{Parser, Subcommand};
use config::{echo_config, parse_config, ScenarioConfig};
use scenarios::Outcome;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "vpb", about = "Vlasov-Poisson-Boltzmann laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for run artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the random-profile probes.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Assemble the linearised operator and audit kernel, symmetry and
    /// spectral gap (exit 4 on gate failure).
    OperatorAudit,
    /// Whole-space linearised decay synthesis and exponent fits.
    LinearDecay,
    /// Time integration of the full perturbation system.
    NonlinearRun,
    /// Reference incompressible NSFP solve.
    NsfpRun,
    /// Kinetic-vs-fluid comparison over an eps list.
    HydroLimit,
    /// Backward characteristics and the Jacobian bracket.
    Characteristics,
    /// Lower bound of the effective collision frequency.
    NuTildeCheck,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::OperatorAudit => "operator-audit",
            Command::LinearDecay => "linear-decay",
            Command::NonlinearRun => "nonlinear-run",
            Command::NsfpRun => "nsfp-run",
            Command::HydroLimit => "hydro-limit",
            Command::Characteristics => "characteristics",
            Command::NuTildeCheck => "nu-tilde-check",
        }
    }
}

fn init_thread_pool() {
    if let Ok(raw) = std::env::var("VPB_THREADS") {
        if let Ok(n) = raw.parse::<usize>() {
            if n >= 1 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .ok();
            }
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    let mut cfg: ScenarioConfig = match &cli.config {
        Some(path) => parse_config(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("vpb-out").join(cli.command.name()));
    let mut sink = ArtifactSink::create(&out_dir, echo_config(&cfg), cfg.seed)?;
    let outcome = match cli.command {
        Command::OperatorAudit => scenarios::operator_audit(&cfg, &mut sink)?,
        Command::LinearDecay => scenarios::linear_decay(&cfg, &mut sink)?,
        Command::NonlinearRun => scenarios::nonlinear_run(&cfg, &mut sink)?,
        Command::NsfpRun => scenarios::nsfp_run_cmd(&cfg, &mut sink)?,
        Command::HydroLimit => scenarios::hydro_limit(&cfg, &mut sink)?,
        Command::Characteristics => scenarios::characteristics_cmd(&cfg, &mut sink)?,
        Command::NuTildeCheck => scenarios::nu_tilde_check(&cfg, &mut sink)?,
    };
    sink.finalize()?;
    for line in &outcome.summary {
        println!("{}: {line}", cli.command.name());
    }
    println!(
        "{}: artifacts in {}",
        cli.command.name(),
        out_dir.display()
    );
    Ok(outcome)
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            if outcome.gates_passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("{}: acceptance gates FAILED", cli.command.name());
                ExitCode::from(4)
            }
        }
        Err(err) => {
            let text = format!("{err:#}");
            eprintln!("vpb: {text}");
            // Configuration problems exit 2; numeric failures exit 3.
            let config_error = text.contains("configuration invalid")
                || text.contains("not well-formed TOML")
                || text.contains("cannot read config")
                || text.contains("invalid parameter")
                || text.contains("grid rejected");
            if config_error {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
