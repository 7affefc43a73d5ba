//! `lyapunov`: center bundle exponents along random orbits and the full
//! spectrum at the fixed point `p`.

use crate::config::ExperimentConfig;
use crate::context::Construction;
use crate::report::{num, Plot, Section, Table};
use crate::CliError;
use phlab::deformation::Chart;
use phlab::ergodic::{bundle_exponent, lyapunov_spectrum, random_orbits, Bundle, OrbitSpec};
use rayon::prelude::*;

struct OrbitRow {
    cu: f64,
    cu_clean: bool,
    cs_ss: f64,
    cs_ss_clean: bool,
}

pub fn run(c: &Construction, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut s = random_orbit_signs(c, cfg)?;
    s.merge(fixed_point_spectrum(c, cfg)?);
    Ok(s)
}

/// `F^cu` exponent positive and `F^cs + F^ss` exponent negative along
/// Lebesgue-random orbits.
pub fn random_orbit_signs(c: &Construction, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut sec = Section::default();
    let lc = &cfg.lyapunov;
    let sys = &c.system;
    let orbits = random_orbits::<f64>(4, lc.orbits, lc.length, lc.transient, cfg.seed ^ 0x5eed_0007)?;
    let results = orbits
        .par_iter()
        .map(|o| -> phlab::Result<_> {
            let cu = bundle_exponent(sys, o, Bundle::Cu)?;
            let cs_ss = bundle_exponent(sys, o, Bundle::CsSs)?;
            Ok((cu, cs_ss))
        })
        .collect::<phlab::Result<Vec<_>>>()?;

    let mut table = Table::new(
        "lyapunov_orbits.csv",
        &[
            "orbit",
            "x0",
            "x1",
            "x2",
            "x3",
            "cu",
            "cu_tail",
            "cu_stderr",
            "cu_clean",
            "cs_ss",
            "cs_ss_tail",
            "cs_ss_stderr",
            "cs_ss_clean",
        ],
    );
    let mut rows = Vec::with_capacity(results.len());
    for (i, (o, (cu, cs))) in orbits.iter().zip(&results).enumerate() {
        let row = OrbitRow {
            cu: cu.value,
            cu_clean: cu.flag.converged && cu.splitting_converged,
            cs_ss: cs.value,
            cs_ss_clean: cs.flag.converged && cs.splitting_converged,
        };
        let x = o.start.coords();
        table.push([
            i.to_string(),
            num(x[0]),
            num(x[1]),
            num(x[2]),
            num(x[3]),
            num(cu.value),
            num(cu.flag.tail_mean),
            num(cu.flag.standard_error),
            row.cu_clean.to_string(),
            num(cs.value),
            num(cs.flag.tail_mean),
            num(cs.flag.standard_error),
            row.cs_ss_clean.to_string(),
        ]);
        rows.push(row);
    }
    let agreeing = rows.iter().filter(|r| r.cu > 0.0 && r.cs_ss < 0.0 && r.cu_clean && r.cs_ss_clean).count();
    let positive = rows.iter().filter(|r| r.cu > 0.0).count();
    let negative = rows.iter().filter(|r| r.cs_ss < 0.0).count();
    let unclean = rows.iter().filter(|r| !(r.cu_clean && r.cs_ss_clean)).count();
    sec.check(
        "lyapunov_center_signs",
        Some(7),
        agreeing >= lc.min_agreeing,
        format!(
            "{agreeing}/{} orbits of length {} with cu > 0, cs+ss < 0 and clean convergence flags (need {}); cu > 0 on {positive}, cs+ss < 0 on {negative}, {unclean} flagged",
            rows.len(),
            lc.length,
            lc.min_agreeing
        ),
    );
    if unclean > 0 {
        sec.warn(format!("{unclean} orbits have last-quarter convergence warnings"));
    }
    let mean = |f: fn(&OrbitRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len().max(1) as f64;
    sec.metric("mean_cu_exponent", num(mean(|r| r.cu)));
    sec.metric("mean_cs_ss_exponent", num(mean(|r| r.cs_ss)));
    sec.metric("min_cu_exponent", num(rows.iter().map(|r| r.cu).fold(f64::INFINITY, f64::min)));
    sec.metric("max_cs_ss_exponent", num(rows.iter().map(|r| r.cs_ss).fold(f64::NEG_INFINITY, f64::max)));
    sec.tables.push(table);

    if let Some((cu, _)) = results.first() {
        let mut hist = Table::new("lyapunov_history.csv", &["steps", "cu_running_mean"]);
        for (n, v) in &cu.history {
            hist.push([n.to_string(), num(*v)]);
        }
        sec.tables.push(hist);
        sec.plots.push(Plot {
            table: "lyapunov_history.csv".into(),
            x: 0,
            y: 1,
            title: "running cu exponent, orbit 0".into(),
            log_y: false,
        });
    }
    Ok(sec)
}

/// At `p` the Jacobian is `diag(lambda_uu, lambda_ss, 1, lambda_s)`, so the
/// center-unstable exponent is zero.
pub fn fixed_point_spectrum(c: &Construction, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut sec = Section::default();
    let lc = &cfg.lyapunov;
    let p = c.system.fixed_point(Chart::P).clone();
    let orbit = OrbitSpec::new(p, lc.fixed_point_length, 0, cfg.seed)?;
    let spec = lyapunov_spectrum(&c.system, &orbit)?;
    let cu = spec.exponents[1];
    sec.check(
        "cu_exponent_at_p",
        Some(7),
        cu.abs() < lc.fixed_point_tolerance,
        format!(
            "spectrum at p over {} steps: [{}]; cu exponent {} (tol {})",
            lc.fixed_point_length,
            spec.exponents.iter().map(|&e| num(e)).collect::<Vec<_>>().join(", "),
            num(cu),
            lc.fixed_point_tolerance
        ),
    );
    sec.metric("cu_exponent_at_p", num(cu));
    Ok(sec)
}
