//! `verify-cones`: the five cone conditions on sampled (point, vector)
//! pairs.

use crate::config::ExperimentConfig;
use crate::context::Construction;
use crate::report::{num, Section, Table};
use crate::CliError;
use phlab::cone::verify_cone_program;

pub fn run(c: &Construction, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut sec = Section::default();
    let width = cfg.cones.width.unwrap_or_else(|| c.params.eps0());
    let vpp = cfg.cones.vectors_per_point;
    sec.metric("cone_width", num(width));
    sec.metric("cone_samples", cfg.cones.points * vpp);
    let mut table = Table::new(
        "cones.csv",
        &["system", "condition", "direction", "samples", "theta", "growth", "violations", "max_off_subspace", "passed"],
    );
    for (label, sys, criterion) in [("deformed", &c.system, Some(6)), ("tilde", &c.tilde, None)] {
        let points = sys.stress_points(cfg.cones.points, cfg.seed ^ 0x5eed_0006);
        let results = verify_cone_program(sys, width, &points, vpp, cfg.seed ^ 0x5eed_0106)?;
        for r in &results {
            for rep in &r.reports {
                table.push([
                    label.to_string(),
                    r.condition.label().to_string(),
                    format!("{:?}", rep.direction),
                    rep.samples.to_string(),
                    num(rep.theta),
                    num(rep.growth),
                    rep.violations.to_string(),
                    num(rep.max_off_subspace),
                    r.passed.to_string(),
                ]);
            }
            let samples: usize = r.reports.iter().map(|x| x.samples).sum();
            sec.check(
                &format!("cone_{label}_{}", r.condition.label()),
                criterion,
                r.passed && r.violations() == 0,
                format!(
                    "{samples} samples, theta {}, growth {}, violations {}",
                    num(r.theta()),
                    num(r.growth()),
                    r.violations()
                ),
            );
        }
    }
    sec.tables.push(table);
    Ok(sec)
}
