use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use mdm_cli::commands::{
    cmd_integrate, cmd_oracle, cmd_plan, cmd_sweep, exit_code, usage, Incomplete, UsageError,
};
use mdm_cli::RunConfig;

#[derive(Parser)]
#[command(
    name = "mdm",
    version,
    about = "Integrate functions of infinitely many variables by the multivariate decomposition method"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Active set and sample allocation, without evaluating the integrand
    Plan(Common),
    /// Run the method and write a JSON report
    Integrate(Common),
    /// Run over a list of tolerances and write a CSV table
    Sweep(Common),
    /// Reference value of the integral
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output file (standard output by default)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, env = "MDM_THREADS")]
    threads: Option<usize>,
    /// Random seed, overriding the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// Per-subset CSV for `integrate`
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn write_output(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (Command::Plan(c) | Command::Integrate(c) | Command::Sweep(c) | Command::Oracle(c)) =
        &cli.command;
    let mut cfg = RunConfig::load(&c.config).map_err(usage)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if c.threads == Some(0) {
        return Err(UsageError("--threads must be at least 1".into()).into());
    }
    if let Some(n) = c.threads.or(cfg.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot start worker pool")?;
    }
    let out = c
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from));
    let result = match &cli.command {
        Command::Plan(_) => cmd_plan(&cfg),
        Command::Integrate(_) => cmd_integrate(&cfg).and_then(|(json, csv)| {
            if let Some(p) = c
                .csv
                .clone()
                .or_else(|| cfg.csv.as_ref().map(PathBuf::from))
            {
                write_output(Some(&p), &csv)?;
            }
            Ok(json)
        }),
        Command::Sweep(_) => cmd_sweep(&cfg),
        Command::Oracle(_) => cmd_oracle(&cfg),
    };
    match result {
        Ok(text) => write_output(out.as_deref(), &text),
        Err(e) => {
            // partial results are still written before reporting failure
            if let Some(inc) = e.downcast_ref::<Incomplete>() {
                write_output(out.as_deref(), &inc.output)?;
            }
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
