use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stars_isac::bench::{self, ExperimentConfig, ExperimentKind};
use stars_isac::{Error, Result};

#[derive(Parser)]
#[command(name = "stars-bench", about = "Experiments for STARS-assisted near-field sensing and communication")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form against exact SPEB at the initial operating point.
    ValidateSpeb(Common),
    /// Per-iteration cost of the full alternation.
    Convergence(Common),
    /// Scheme comparison over transmit power.
    SweepPower(Common),
    /// Scheme comparison over the surface element count.
    SweepElements(Common),
    /// ML and MUSIC estimation error against the bound.
    Rmse(Common),
    /// One full optimization run.
    Solve(Common),
    /// Oracle checks with pinned thresholds.
    Selftest(Common),
    /// Prints a preset as TOML.
    Preset { name: String },
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; replaces the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name; defaults to the subcommand.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(c: &Common, default: &str, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let mut exp = match (&c.config, &c.preset) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, name) => {
            let name = name.as_deref().unwrap_or(default);
            bench::preset(name).ok_or_else(|| Error::Config(format!("unknown preset {name}; known: {}", bench::PRESET_NAMES.join(", "))))?
        }
    };
    if exp.kind != kind {
        return Err(Error::Config(format!("experiment kind {:?} does not match the subcommand", exp.kind)));
    }
    if let Some(s) = c.seed {
        exp.run.seed = s;
    }
    if let Some(t) = c.trials {
        exp.run.trials = t;
    }
    exp.validate()?;
    Ok(exp)
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let (c, default, kind) = match &cli.cmd {
        Cmd::Preset { name } => {
            let p = bench::preset(name).ok_or_else(|| Error::Config(format!("unknown preset {name}")))?;
            print!("{}", p.to_toml_string()?);
            return Ok(Vec::new());
        }
        Cmd::Selftest(c) => {
            let rows = bench::selftest()?;
            let paths = bench::emit_selftest(&rows, &c.out)?;
            let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.check).collect();
            if !failed.is_empty() {
                return Err(Error::Solver(format!("selftest checks failed: {}", failed.join(", "))));
            }
            return Ok(paths);
        }
        Cmd::ValidateSpeb(c) => (c, "validate-speb", ExperimentKind::ValidateSpeb),
        Cmd::Convergence(c) => (c, "convergence", ExperimentKind::Convergence),
        Cmd::SweepPower(c) => (c, "sweep-power", ExperimentKind::Sweep),
        Cmd::SweepElements(c) => (c, "sweep-elements", ExperimentKind::Sweep),
        Cmd::Rmse(c) => (c, "rmse", ExperimentKind::Rmse),
        Cmd::Solve(c) => (c, "solve", ExperimentKind::Solve),
    };
    let exp = load(c, default, kind)?;
    bench::run_experiment(&exp, &c.out, c.threads)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
