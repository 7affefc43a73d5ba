//! `gibbs`: Cesàro estimates of a Gibbs u-state, its center integrals and
//! its projection to the base torus.

use crate::config::ExperimentConfig;
use crate::context::Construction;
use crate::report::{num, Plot, Section, Table};
use crate::CliError;
use phlab::deformation::Chart;
use phlab::ergodic::{bundle_exponent, random_orbits, Bundle};
use phlab::gibbs::{cesaro_integrals, pushforward_base, seed_plaque, total_variation, CesaroState, EmpiricalMeasure};
use phlab::torus::TorusPoint;
use rayon::prelude::*;

/// Checkpoints recorded while pushing the plaque.
const TV_CHECKPOINTS: usize = 10;

pub fn run(c: &Construction, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut s = center_integrals(c, cfg)?;
    s.merge(base_pushforward(c, cfg)?);
    Ok(s)
}

/// Center log-Jacobian integrals along random orbits and against the
/// Cesàro estimate, plus the mass of the slab around `p`.
pub fn center_integrals(c: &Construction, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut sec = Section::default();
    let g = &cfg.gibbs;
    let sys = &c.system;

    let orbits = random_orbits::<f64>(4, g.orbits, g.orbit_length, g.transient, cfg.seed ^ 0x5eed_0008)?;
    let per_orbit = orbits
        .par_iter()
        .map(|o| -> phlab::Result<(f64, f64)> {
            Ok((bundle_exponent(sys, o, Bundle::Cu)?.value, -bundle_exponent(sys, o, Bundle::Cs)?.value))
        })
        .collect::<phlab::Result<Vec<_>>>()?;
    let mut table = Table::new("gibbs_orbits.csv", &["orbit", "log_jac_cu", "log_jac_inv_cs"]);
    for (i, (a, b)) in per_orbit.iter().enumerate() {
        table.push([i.to_string(), num(*a), num(*b)]);
    }
    sec.tables.push(table);
    let cu_min = per_orbit.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let cs_min = per_orbit.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    sec.check(
        "orbit_log_jacobian_cu_positive",
        Some(8),
        cu_min > 0.0,
        format!("min over {} orbits of the Birkhoff average of log|Df on F^cu| = {}", orbits.len(), num(cu_min)),
    );
    sec.check(
        "orbit_log_jacobian_inverse_cs_positive",
        Some(8),
        cs_min > 0.0,
        format!("min over {} orbits of the Birkhoff average of log|Df^-1 on F^cs| = {}", orbits.len(), num(cs_min)),
    );

    let anchor = TorusPoint::from_slice(&g.anchor);
    let plaque = seed_plaque(sys, &anchor, g.half_length, g.integral_samples, cfg.seed ^ 0x5eed_0009)?;
    let h = sys.box_half_width();
    let slab = |x: &TorusPoint<f64>| {
        let y = sys.chart_coords(Chart::P, x);
        y[0].abs() <= h && y[1].abs() <= h
    };
    let ints = cesaro_integrals(sys, &plaque, g.integral_steps, &slab)?;
    let detail = |v: f64| format!("{} samples x {} steps: {}", g.integral_samples, g.integral_steps, num(v));
    sec.check("cesaro_log_jacobian_cu_positive", Some(8), ints.cu_log_growth > 0.0, detail(ints.cu_log_growth));
    sec.check(
        "cesaro_log_jacobian_inverse_cs_positive",
        Some(8),
        ints.cs_inverse_log_growth > 0.0,
        detail(ints.cs_inverse_log_growth),
    );
    let limit = g.slab_bound + g.slab_tolerance;
    sec.check(
        "cesaro_slab_mass",
        Some(8),
        ints.slab_mass <= limit,
        format!("mass of the box |a|, |b| <= 2 delta around p: {} <= {}", num(ints.slab_mass), num(limit)),
    );
    if ints.unconverged > 0 {
        sec.warn(format!("{} plaque samples had an unconverged splitting", ints.unconverged));
    }
    sec.metric("cesaro_unconverged_splittings", ints.unconverged);
    Ok(sec)
}

/// Total variation between the base marginal of the Cesàro estimate and
/// Lebesgue measure on `T^2`.
pub fn base_pushforward(c: &Construction, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut sec = Section::default();
    let g = &cfg.gibbs;
    let sys = &c.system;
    let anchor = TorusPoint::from_slice(&g.anchor);
    let plaque = seed_plaque(sys, &anchor, g.half_length, g.plaque_samples, cfg.seed ^ 0x5eed_000a)?;
    let uniform = EmpiricalMeasure::uniform(&[g.bins, g.bins])?;
    let mut state = CesaroState::new(&plaque, &[g.bins; 4])?;
    let mut table = Table::new("gibbs_tv.csv", &["steps", "tv_base_uniform"]);
    let mut done = 0;
    let mut tv = 1.0;
    for i in 1..=TV_CHECKPOINTS {
        let target = g.steps * i / TV_CHECKPOINTS;
        if target > done {
            state.advance(sys, target - done)?;
            done = target;
            tv = total_variation(&pushforward_base(&state.measure(), 2)?, &uniform)?;
            table.push([done.to_string(), num(tv)]);
        }
    }
    sec.check(
        "base_pushforward_uniform",
        Some(9),
        done > 0 && tv < g.tv_tolerance,
        format!(
            "TV(base marginal, Lebesgue) on a {}x{} grid = {} after {done} steps with {} samples (tol {})",
            g.bins,
            g.bins,
            num(tv),
            g.plaque_samples,
            g.tv_tolerance
        ),
    );
    sec.metric("cesaro_invariance_defect", num(state.invariance_defect()));
    sec.tables.push(table);
    sec.plots.push(Plot {
        table: "gibbs_tv.csv".into(),
        x: 0,
        y: 1,
        title: "TV of base marginal to Lebesgue".into(),
        log_y: true,
    });
    Ok(sec)
}
