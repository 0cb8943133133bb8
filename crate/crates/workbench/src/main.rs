use std::path::PathBuf;
use std::process::ExitCode;

use auxetic_workbench::commands;
use auxetic_workbench::config::{preset_names, JobConfig};
use auxetic_workbench::error::CliError;
use clap::{Args, Parser, Subcommand};

/// Design and check periodic auxetic unit cells.
#[derive(Parser)]
#[command(name = "auxetic", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML job file; may start from a built-in preset via `preset = "..."`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a built-in preset (use `preset = "..."` inside a config to combine both).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for random designs and sampling; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Drive a design along the uniaxial load case; writes path.csv and deformed meshes.
    Homogenize(Common),
    /// Run the topology optimization; writes history.csv and the designs.
    Optimize(Common),
    /// Rank-one and Bloch stability along the load path.
    Stability(Common),
    /// Tile the thresholded cell N×N and compare Poisson's ratios. The
    /// axial displacement is applied to the outer faces of the bottom and
    /// top element rows; the sides are traction free.
    TileTest(Common),
    /// Compare analytic gradients with central differences on a small mesh.
    CheckGrad(Common),
    /// List the built-in presets.
    Presets,
}

fn load(c: &Common) -> Result<JobConfig, CliError> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(p), _) => JobConfig::load(p)?,
        (None, Some(name)) => JobConfig::parse(&format!("preset = {name:?}"))?,
        (None, None) => JobConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (c, f): (&Common, fn(&JobConfig, &std::path::Path) -> Result<commands::Outcome, CliError>) = match &cli.command {
        Command::Homogenize(c) => (c, commands::homogenize),
        Command::Optimize(c) => (c, commands::optimize),
        Command::Stability(c) => (c, commands::stability),
        Command::TileTest(c) => (c, commands::tile),
        Command::CheckGrad(c) => (c, commands::check_grad),
        Command::Presets => {
            for p in preset_names() {
                println!("{p}");
            }
            return Ok(());
        }
    };
    let cfg = load(c)?;
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let outcome = f(&cfg, &c.out)?;
    println!("{}", outcome.summary);
    for p in outcome.files {
        println!("  wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
