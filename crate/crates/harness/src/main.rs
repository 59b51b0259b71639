use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pinning_core::exec::{self, Exec};
use pinning_harness::{run_experiment, ExperimentConfig, ExperimentKind, HarnessError, RunOptions};

#[derive(Parser)]
#[command(name = "pinning", version, about = "Run interface pinning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use seeds 0..N (overrides the config).
    #[arg(long, global = true)]
    seeds: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    svg: bool,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build and verify lattice barriers.
    DiscreteBuild,
    /// Run the jump dynamics against a barrier.
    DiscreteSimulate,
    /// Estimate E[max_k (Z_k - k)].
    AlphaEstimate,
    /// Minimal open Lipschitz surfaces on random grids.
    Percolation,
    /// Build and check a continuum barrier.
    ContinuumBuild,
    /// Run a parameter grid.
    Sweep,
    /// Check an output directory against its manifest.
    Verify,
}

impl Command {
    fn kind(self) -> Option<ExperimentKind> {
        Some(match self {
            Command::DiscreteBuild => ExperimentKind::DiscreteBuild,
            Command::DiscreteSimulate => ExperimentKind::DiscreteSimulate,
            Command::AlphaEstimate => ExperimentKind::AlphaEstimate,
            Command::Percolation => ExperimentKind::Percolation,
            Command::ContinuumBuild => ExperimentKind::ContinuumBuild,
            Command::Sweep => ExperimentKind::Sweep,
            Command::Verify => return None,
        })
    }
}

fn load(cli: &Cli, kind: ExperimentKind) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::config("--config", format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(HarnessError::config("kind", format!("config is for {k}, not {kind}")));
        }
    }
    if let Some(n) = cli.seeds {
        cfg.seeds = pinning_harness::config::SeedSpec::Range { base: 0, count: n };
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<ExitCode, HarnessError> {
    let Some(kind) = cli.command.kind() else {
        let dir = cli.out.clone().ok_or_else(|| HarnessError::config("--out", "verify needs --out"))?;
        let bad = pinning_harness::output::verify_manifest(&dir)?;
        for p in &bad {
            eprintln!("mismatch: {p}");
        }
        println!("{} file(s) differ from the manifest", bad.len());
        return Ok(if bad.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(3) });
    };
    let cfg = load(cli, kind)?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| HarnessError::config("output", "no output directory (use --out or `output = ...`)"))?;
    let opts = RunOptions {
        out: out.clone(),
        svg: cli.svg,
        exec: if cli.sequential { Exec::Sequential } else { Exec::Parallel },
    };
    let summary = exec::with_threads(cli.jobs, || run_experiment(&cfg, kind, &opts))?;
    println!("{kind}: {} run(s), {} failed; output in {}", summary.rows.len(), summary.failures, out.display());
    if summary.reused > 0 {
        println!("{} row(s) reused from an earlier run", summary.reused);
    }
    Ok(if summary.failures == 0 { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
