use clap::Parser;
use phlab_cli::{execute, CliError, ExperimentConfig, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Verification experiments for a partially hyperbolic deformation of a
/// toral automorphism.
#[derive(Parser, Debug)]
#[command(name = "phlab", version)]
struct Args {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// TOML configuration; defaults apply to everything left out.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (overrides `workers`; 0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("phlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(args: &Args) -> Result<ExitCode, CliError> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    let out = args.output.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let report = execute(args.subcommand, &cfg, &out)?;
    for c in &report.section.checks {
        println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    println!("report written to {}", out.join("report.txt").display());
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        let failed: Vec<&str> = report.section.failed().iter().map(|c| c.name.as_str()).collect();
        eprintln!("phlab: failed checks: {}", failed.join(", "));
        Ok(ExitCode::from(1))
    }
}
