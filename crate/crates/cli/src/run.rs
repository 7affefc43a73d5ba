//! Subcommand dispatch inside a worker pool of the configured size.

use crate::config::ExperimentConfig;
use crate::context::Construction;
use crate::report::RunReport;
use crate::tasks;
use crate::CliError;
use std::path::Path;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    VerifyConstruction,
    VerifyCones,
    Lyapunov,
    Gibbs,
    Skeleton,
    ProductChecks,
}

impl Subcommand {
    pub const ALL: [Subcommand; 6] = [
        Subcommand::VerifyConstruction,
        Subcommand::VerifyCones,
        Subcommand::Lyapunov,
        Subcommand::Gibbs,
        Subcommand::Skeleton,
        Subcommand::ProductChecks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::VerifyConstruction => "verify-construction",
            Subcommand::VerifyCones => "verify-cones",
            Subcommand::Lyapunov => "lyapunov",
            Subcommand::Gibbs => "gibbs",
            Subcommand::Skeleton => "skeleton",
            Subcommand::ProductChecks => "product-checks",
        }
    }
}

/// Runs `sub`, writes its artifacts to `out_dir` and returns the report.
/// Check failures are reported, not raised; errors mean the run could not
/// complete.
pub fn execute(sub: Subcommand, cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Io(format!("worker pool: {e}")))?;
    let (section, parameters) = pool.install(|| -> Result<_, CliError> {
        let c = Construction::build(cfg)?;
        let section = match sub {
            Subcommand::VerifyConstruction => tasks::construction::run(&c, cfg)?,
            Subcommand::VerifyCones => tasks::cones::run(&c, cfg)?,
            Subcommand::Lyapunov => tasks::lyapunov::run(&c, cfg)?,
            Subcommand::Gibbs => tasks::gibbs::run(&c, cfg)?,
            Subcommand::Skeleton => tasks::skeleton::run(&c, cfg)?,
            Subcommand::ProductChecks => tasks::product::run(&c, cfg)?,
        };
        Ok((section, c.parameters()))
    })?;
    let report = RunReport {
        subcommand: sub.name().to_string(),
        seed: cfg.seed,
        parameters,
        section,
        config_toml: cfg.to_toml(),
        wall_clock: start.elapsed(),
    };
    report.write(out_dir)?;
    Ok(report)
}
