use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use synthbos::engine::{self, suites, ExperimentConfig};

#[derive(Parser)]
#[command(name = "synthbos", version, about = "Synthetic BOS/PIV images by ray tracing through gradient-index media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the configured scene to a 16-bit PGM plus a JSON run report.
    Render {
        config: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Trace with and without the density field and compare to BOS theory.
    Bos {
        config: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Dump the GRIN steps of one ray as CSV.
    TraceDebug {
        config: PathBuf,
        #[arg(long)]
        dot: usize,
        #[arg(long)]
        ray: usize,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Run a built-in validation suite and print its JSON report.
    Validate {
        /// One of: snell, rk4-convergence, lens-focus, energy, bos-uniform, bos-blob.
        suite: String,
        #[arg(long, default_value = "out/validate")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Force deterministic (worker-count independent) accumulation.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(path: &PathBuf, flags: &RunFlags) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = flags.seed {
        cfg.bundle.seed = s;
    }
    if let Some(t) = flags.threads {
        cfg.run.threads = t;
    }
    if flags.deterministic {
        cfg.run.deterministic = true;
    }
    if let Some(o) = &flags.out {
        cfg.run.out_dir = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Render { config, run } => {
            let out = engine::render(&load(&config, &run)?)?;
            println!("{}", serde_json::to_string_pretty(&out.report)?);
            println!("wrote {}", out.image_path.display());
        }
        Command::Bos { config, run } => {
            let out = engine::bos_run(&load(&config, &run)?)?;
            println!("{}", serde_json::to_string_pretty(&out.summary)?);
        }
        Command::TraceDebug { config, dot, ray, run } => {
            let out = engine::trace_debug(&load(&config, &run)?, dot, ray)?;
            println!("{} steps, fate {:?}", out.steps.len(), out.fate);
            println!("wrote {}", out.path.display());
        }
        Command::Validate { suite, out } => {
            let report = suites::validate(&suite, &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
