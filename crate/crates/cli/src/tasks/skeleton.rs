//! `skeleton`: periodic-point census, fixed-point indices of the
//! hyperbolic variant, and skeleton extraction on the census map.

use crate::config::{parse_matrix, ExperimentConfig};
use crate::context::Construction;
use crate::report::{num, Section, Table};
use crate::CliError;
use nalgebra::DVector;
use phlab::deformation::Chart;
use phlab::rng;
use phlab::skeleton::{
    extract_skeleton, grow_manifold, newton_periodic, periodic_census, record_at, ManifoldKind, PeriodicPointRecord,
    NEUTRAL_BAND,
};
use phlab::torus::TorusPoint;
use phlab::torus_linear::{enumerate_periodic, fixed_point_count, ToralAutomorphism};

const DEDUPE_TOL: f64 = 1e-8;

/// Census records, one list per period starting at 1.
pub type RecordsByPeriod = Vec<Vec<PeriodicPointRecord<f64>>>;

pub fn run(c: &Construction, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let map = parse_matrix("skeleton.matrix", &cfg.skeleton.matrix)?;
    let (mut s, records) = census(&map, cfg)?;
    s.merge(fixed_point_indices(c, cfg)?);
    s.merge(skeleton(&map, &records, cfg)?);
    Ok(s)
}

fn jittered(points: Vec<TorusPoint<f64>>, jitter: f64, seed: u64, period: u32) -> Vec<TorusPoint<f64>> {
    let mut r = rng::stream(seed, period as u64);
    points
        .into_iter()
        .map(|p| {
            let d: Vec<f64> = (0..p.dim()).map(|_| rng::uniform(&mut r, -jitter, jitter)).collect();
            p.translate(&DVector::from_vec(d))
        })
        .collect()
}

/// Newton from jittered lattice guesses must recover exactly
/// `|det(A^n - I)|` distinct points of each period `n`.
pub fn census(map: &ToralAutomorphism<f64>, cfg: &ExperimentConfig) -> Result<(Section, RecordsByPeriod), CliError> {
    let mut sec = Section::default();
    let sc = &cfg.skeleton;
    let mut table = Table::new("census.csv", &["period", "index", "point", "residual", "stable_index", "multipliers"]);
    let mut by_period = Vec::new();
    for n in 1..=sc.max_period {
        let expected = fixed_point_count(map.matrix(), n)?;
        let lattice = enumerate_periodic::<f64>(map.matrix(), n)?;
        let guesses = jittered(lattice.clone(), sc.guess_jitter, cfg.seed ^ 0x5eed_000b, n);
        let c = periodic_census(map, &guesses, n as usize, sc.newton_iterations, sc.newton_tolerance, DEDUPE_TOL);
        let ok = c.records.len() as u128 == expected && lattice.len() as u128 == expected && c.failures == 0;
        sec.check(
            &format!("census_period_{n}"),
            Some(10),
            ok,
            format!(
                "|det(A^{n} - I)| = {expected}; lattice points {}; Newton roots {} from {} launches ({} failures, {} non-hyperbolic)",
                lattice.len(),
                c.records.len(),
                c.launches,
                c.failures,
                c.non_hyperbolic
            ),
        );
        for (i, r) in c.records.iter().enumerate() {
            table.push([
                n.to_string(),
                i.to_string(),
                fmt_point(&r.point),
                num(r.residual),
                r.stable_index.to_string(),
                r.multipliers.iter().map(|&m| num(m)).collect::<Vec<_>>().join(" "),
            ]);
        }
        by_period.push(c.records);
    }
    sec.tables.push(table);
    Ok((sec, by_period))
}

/// Stable indices 3 and 1 at `p` and `q` of the hyperbolic variant; the
/// untilded `p` has a neutral multiplier.
pub fn fixed_point_indices(c: &Construction, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut sec = Section::default();
    let sc = &cfg.skeleton;
    let mut table =
        Table::new("fixed_points.csv", &["system", "point", "stable_index", "multipliers", "min_gap_to_unit_circle"]);
    for (chart, want) in [(Chart::P, 3usize), (Chart::Q, 1usize)] {
        let guess = c.tilde.fixed_point(chart);
        let rec = newton_periodic(&c.tilde, guess, 1, sc.newton_iterations, sc.newton_tolerance)?;
        let gap = rec.multipliers.iter().map(|m| (m - 1.0).abs()).fold(f64::INFINITY, f64::min);
        table.push([
            "tilde".into(),
            format!("{chart:?}"),
            rec.stable_index.to_string(),
            rec.multipliers.iter().map(|&m| num(m)).collect::<Vec<_>>().join(" "),
            num(gap),
        ]);
        sec.check(
            &format!("stable_index_{chart:?}"),
            Some(11),
            rec.stable_index == want && gap > NEUTRAL_BAND && rec.hyperbolic,
            format!(
                "stable index {} (expected {want}); multipliers [{}]; closest modulus to 1 differs by {} (band {NEUTRAL_BAND})",
                rec.stable_index,
                rec.multipliers.iter().map(|&m| num(m)).collect::<Vec<_>>().join(", "),
                num(gap)
            ),
        );
    }
    // Without eps_tilde the center multiplier at p is exactly 1.
    let rec = record_at(&c.system, c.system.fixed_point(Chart::P), 1)?;
    let gap = rec.multipliers.iter().map(|m| (m - 1.0).abs()).fold(f64::INFINITY, f64::min);
    sec.check(
        "untilded_p_non_hyperbolic",
        None,
        !rec.hyperbolic && gap < NEUTRAL_BAND,
        format!(
            "multipliers at p without eps_tilde: [{}]",
            rec.multipliers.iter().map(|&m| num(m)).collect::<Vec<_>>().join(", ")
        ),
    );
    sec.tables.push(table);
    Ok(sec)
}

/// Skeleton of the census map from points of small period.
pub fn skeleton(
    map: &ToralAutomorphism<f64>,
    by_period: &[Vec<PeriodicPointRecord<f64>>],
    cfg: &ExperimentConfig,
) -> Result<Section, CliError> {
    let mut sec = Section::default();
    let sc = &cfg.skeleton;
    // Each point enters once, with its least period.
    let mut records: Vec<PeriodicPointRecord<f64>> = Vec::new();
    for recs in by_period.iter().take(sc.skeleton_max_period as usize) {
        for r in recs {
            if !records.iter().any(|k| k.point.distance(&r.point) < DEDUPE_TOL) {
                records.push(r.clone());
            }
        }
    }
    let mut arcs = Vec::with_capacity(records.len());
    for r in &records {
        let mut a = grow_manifold(map, r, ManifoldKind::Unstable, sc.arc_length, sc.resolution)?;
        a.extend(grow_manifold(map, r, ManifoldKind::Stable, sc.arc_length, sc.resolution)?);
        arcs.push(a);
    }
    let cand = extract_skeleton(&records, &arcs, sc.intersection_tolerance)?;
    let incomplete = arcs.iter().flatten().filter(|a| !a.complete).count();
    if incomplete > 0 {
        sec.warn(format!("{incomplete} manifold arcs stopped before the target length"));
    }
    sec.warnings.extend(cand.warnings.iter().cloned());
    sec.check(
        "skeleton_nonempty",
        None,
        !cand.members.is_empty() || records.is_empty(),
        format!(
            "{} of {} candidate points kept: [{}]",
            cand.members.len(),
            records.len(),
            cand.members.iter().map(|r| fmt_point(&r.point)).collect::<Vec<_>>().join("; ")
        ),
    );
    sec.metric("skeleton_size", cand.members.len());

    let mut ev = Table::new(
        "skeleton_evidence.csv",
        &["stable_of", "unstable_of", "min_distance", "intersects", "inconclusive", "exhaustive"],
    );
    for (i, row) in cand.evidence.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            if let Some(e) = e {
                ev.push([
                    i.to_string(),
                    j.to_string(),
                    num(e.min_distance),
                    e.intersects.to_string(),
                    e.inconclusive.to_string(),
                    e.exhaustive.to_string(),
                ]);
            }
        }
    }
    sec.tables.push(ev);
    let mut members = Table::new("skeleton.csv", &["record", "period", "point", "stable_index"]);
    for (&i, r) in cand.member_indices.iter().zip(&cand.members) {
        members.push([i.to_string(), r.period.to_string(), fmt_point(&r.point), r.stable_index.to_string()]);
    }
    sec.tables.push(members);
    if sc.dump_arcs {
        let mut t = Table::new("manifold_arcs.csv", &["record", "arc", "kind", "vertex", "point"]);
        for (i, list) in arcs.iter().enumerate() {
            for (k, a) in list.iter().enumerate() {
                for (v, p) in a.polyline.iter().enumerate() {
                    t.push([i.to_string(), k.to_string(), a.kind.label().to_string(), v.to_string(), fmt_point(p)]);
                }
            }
        }
        sec.tables.push(t);
    }
    Ok(sec)
}

fn fmt_point(p: &TorusPoint<f64>) -> String {
    p.coords().iter().map(|&x| num(x)).collect::<Vec<_>>().join(" ")
}
