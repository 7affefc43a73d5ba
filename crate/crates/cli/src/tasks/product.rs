//! `product-checks`: the product builder, its commuting diagrams, the
//! entropy/volume identity, and fiber statistics.

use crate::config::{parse_matrix, BaseKind, ExperimentConfig};
use crate::context::Construction;
use crate::report::{num, Section, Table};
use crate::CliError;
use phlab::cone::{axis, strong_unstable_direction};
use phlab::ergodic::{entropy_volume_identity, growth_sandwich_check, lyapunov_spectrum, OrbitSpec};
use phlab::gibbs::{seed_plaque, total_variation, CesaroState, EmpiricalMeasure};
use phlab::map::{finite_difference_jacobian, relative_frobenius_error, StrongUnstable, TorusMap};
use phlab::product::{
    build_product, commuting_diagram_check, fiber_pushforward_statistics, AttractingCircleBase, BaseSystem, LinearBase,
    ProductSystem,
};
use phlab::rng;
use phlab::skeleton::{extract_skeleton, grow_manifold, newton_periodic, ManifoldKind};
use phlab::torus::TorusPoint;

const LINEAR_GAP_TOL: f64 = 1e-10;
const DIAGRAM_TOL: f64 = 1e-12;
const SPECTRUM_TOL: f64 = 1e-8;
const LEAF_TOL: f64 = 1e-8;
const MARGINAL_TOL: f64 = 1e-12;
/// Coupling strength of the negative control.
const COUPLING: f64 = 1e-3;

fn base_system(cfg: &ExperimentConfig) -> Result<Box<dyn BaseSystem<f64>>, CliError> {
    let pc = &cfg.product;
    let a = parse_matrix("product.base_matrix", &pc.base_matrix)?;
    Ok(match pc.base {
        BaseKind::Linear => Box::new(LinearBase::new(a)?),
        BaseKind::Circle => Box::new(AttractingCircleBase::new(a, pc.attractors, pc.circle_eps)?),
    })
}

pub fn build(cfg: &ExperimentConfig) -> Result<ProductSystem<f64>, CliError> {
    let fiber = parse_matrix("product.fiber_matrix", &cfg.product.fiber_matrix)?;
    Ok(build_product(base_system(cfg)?, fiber)?)
}

fn random_point(dim: usize, seed: u64, idx: u64) -> TorusPoint<f64> {
    let mut r = rng::stream(seed, idx);
    TorusPoint::new((0..dim).map(|_| rng::uniform(&mut r, 0.0, 1.0)).collect())
}

pub fn run(c: &Construction, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let ps = build(cfg)?;
    let mut s = entropy_volume(c, &ps, cfg)?;
    s.merge(structure(&ps, cfg)?);
    s.merge(fiber_statistics(&ps, cfg)?);
    if cfg.product.base == BaseKind::Circle {
        s.merge(attractor_skeleton(cfg)?);
    }
    Ok(s)
}

/// The Birkhoff average of the log-growth along the strong-unstable bundle
/// equals the log of the base unstable rate.
pub fn entropy_volume(c: &Construction, ps: &ProductSystem<f64>, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut sec = Section::default();
    let pc = &cfg.product;
    let mut table = Table::new("entropy_volume.csv", &["system", "steps", "estimate", "log_base_rate", "gap"]);

    let orbit = OrbitSpec::new(random_point(ps.dim(), cfg.seed ^ 0x5eed_000c, 0), pc.linear_orbit_length, 0, cfg.seed)?;
    let ev = entropy_volume_identity(ps, &orbit, &ps.strong_unstable_axis())?;
    table.push([
        "product".into(),
        pc.linear_orbit_length.to_string(),
        num(ev.estimate),
        num(ev.log_base_rate),
        num(ev.gap),
    ]);
    sec.check(
        "entropy_volume_product",
        Some(12),
        ev.gap < LINEAR_GAP_TOL,
        format!(
            "|estimate - log lambda_u(base)| = {} over {} steps (tol {LINEAR_GAP_TOL})",
            num(ev.gap),
            pc.linear_orbit_length
        ),
    );

    let orbit = OrbitSpec::new(random_point(4, cfg.seed ^ 0x5eed_000d, 0), pc.deformed_orbit_length, 0, cfg.seed)?;
    let ev = entropy_volume_identity(&c.system, &orbit, &axis(4, 0))?;
    table.push([
        "deformed".into(),
        pc.deformed_orbit_length.to_string(),
        num(ev.estimate),
        num(ev.log_base_rate),
        num(ev.gap),
    ]);
    sec.check(
        "entropy_volume_deformed",
        Some(12),
        ev.gap < pc.deformed_tolerance,
        format!(
            "|estimate - log lambda_uu| = {} over {} steps (tol {})",
            num(ev.gap),
            pc.deformed_orbit_length,
            pc.deformed_tolerance
        ),
    );

    // Cone vectors around the strong-unstable axis grow like the base.
    let ax = ps.strong_unstable_axis();
    let mut v = ax.clone();
    for i in 0..v.len() {
        v[i] += 0.05 * ((i % 3) as f64 - 1.0);
    }
    let vu = &ax * ax.dot(&v);
    let alpha = (&v - &vu).norm() / vu.norm();
    let start = random_point(ps.dim(), cfg.seed ^ 0x5eed_000e, 0);
    let mut worst_ok = true;
    for n in [1usize, 10, 30] {
        let s = growth_sandwich_check(ps, &start, &v, n, alpha)?;
        worst_ok &= s.holds(1e-9);
    }
    sec.check(
        "growth_sandwich",
        None,
        worst_ok,
        format!("cone of width {} around the base unstable axis, n = 1, 10, 30", num(alpha)),
    );
    sec.tables.push(table);
    Ok(sec)
}

/// Diagrams, block Jacobian, spectrum and strong-unstable leaves.
pub fn structure(ps: &ProductSystem<f64>, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut sec = Section::default();
    let pc = &cfg.product;
    let d = ps.domination();
    sec.metric("domination_uu_min", num(d.uu_min));
    sec.metric("domination_cs_max", num(d.cs_max));
    sec.metric("domination_fiber_unstable", format!("{}..{}", num(d.fiber_unstable_min), num(d.fiber_unstable_max)));
    sec.check(
        "domination_precheck",
        None,
        d.passed(),
        format!(
            "sampled surrogate on {} grid points: e^uu >= 1.1 x fiber unstable, fiber unstable >= 1.1 x E^cs",
            d.samples
        ),
    );

    let r = commuting_diagram_check(ps, pc.diagram_points, cfg.seed ^ 0x5eed_000f)?;
    sec.check(
        "commuting_diagrams",
        None,
        r.base < DIAGRAM_TOL && r.fiber < DIAGRAM_TOL && r.anosov < DIAGRAM_TOL,
        format!(
            "max residuals base {}, fiber {}, anosov {} over {} points",
            num(r.base),
            num(r.fiber),
            num(r.anosov),
            r.samples
        ),
    );
    let coupled = build(cfg)?.with_coupling(COUPLING);
    let rc = commuting_diagram_check(&coupled, pc.diagram_points.min(1000), cfg.seed ^ 0x5eed_000f)?;
    sec.check(
        "coupling_detected",
        None,
        rc.fiber > COUPLING / 10.0 && rc.base < DIAGRAM_TOL,
        format!(
            "negative control with coupling {COUPLING}: fiber residual {}, base residual {}",
            num(rc.fiber),
            num(rc.base)
        ),
    );

    let db = ps.base_dim();
    let mut worst_block: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    for i in 0..20 {
        let z = random_point(ps.dim(), cfg.seed ^ 0x5eed_0010, i);
        let j = ps.jacobian(&z)?;
        for a in 0..ps.dim() {
            for b in 0..ps.dim() {
                if (a < db) != (b < db) {
                    worst_block = worst_block.max(j[(a, b)].abs());
                }
            }
        }
        worst_fd = worst_fd.max(relative_frobenius_error(&j, &finite_difference_jacobian(ps, &z, 1e-6)?));
    }
    sec.check(
        "block_jacobian",
        None,
        worst_block == 0.0 && worst_fd < 1e-8,
        format!("off-block entries max {}, finite-difference error {}", num(worst_block), num(worst_fd)),
    );

    if pc.base == BaseKind::Linear {
        let orbit = OrbitSpec::new(
            random_point(ps.dim(), cfg.seed ^ 0x5eed_0011, 0),
            pc.spectrum_length,
            pc.spectrum_length / 6,
            cfg.seed,
        )?;
        let spec = lyapunov_spectrum(ps, &orbit)?;
        let mut expected: Vec<f64> = ps
            .base()
            .anosov()
            .splitting()
            .eigenvalues
            .iter()
            .chain(ps.fiber().splitting().eigenvalues.iter())
            .map(|l| l.abs().ln())
            .collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        let err = spec.exponents.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        sec.check(
            "spectrum_union",
            None,
            err < SPECTRUM_TOL,
            format!(
                "exponents [{}] vs factor spectra [{}]; max error {}",
                spec.exponents.iter().map(|&e| num(e)).collect::<Vec<_>>().join(", "),
                expected.iter().map(|&e| num(e)).collect::<Vec<_>>().join(", "),
                num(err)
            ),
        );
    }

    let mut worst_leaf: f64 = 0.0;
    for i in 0..5 {
        let z = random_point(ps.dim(), cfg.seed ^ 0x5eed_0012, i);
        let (v, res) = strong_unstable_direction(ps, &z, 40)?;
        worst_leaf = worst_leaf.max(v.rows(db, ps.dim() - db).norm()).max(res);
    }
    sec.check(
        "strong_unstable_horizontal",
        None,
        worst_leaf < LEAF_TOL,
        format!("fiber component of E^uu (or residual) at most {}", num(worst_leaf)),
    );
    Ok(sec)
}

/// Cesàro estimates seeded at different fiber points: their fiber
/// marginals follow the fiber orbits exactly.
pub fn fiber_statistics(ps: &ProductSystem<f64>, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut sec = Section::default();
    let pc = &cfg.product;
    let bins = vec![pc.bins; ps.dim()];
    let db = ps.base_dim();
    let base_anchor = random_point(db, cfg.seed ^ 0x5eed_0013, 0);
    let mut marginals = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, w) in pc.fiber_seeds.iter().enumerate() {
        let w = TorusPoint::from_slice(w);
        let plaque =
            seed_plaque(ps, &ps.join(&base_anchor, &w), 0.05, pc.cesaro_samples, cfg.seed ^ (0x5eed_0014 + i as u64))?;
        let mut st = CesaroState::new(&plaque, &bins)?;
        st.advance(ps, pc.cesaro_steps)?;
        let m = fiber_pushforward_statistics(ps, &st.measure())?;
        let mut orbit = Vec::with_capacity(pc.cesaro_steps);
        let mut y = w.clone();
        for _ in 0..pc.cesaro_steps {
            orbit.push(y.clone());
            y = ps.fiber().apply(&y)?;
        }
        let direct = EmpiricalMeasure::from_points(&bins[db..], &orbit)?;
        worst = worst.max(total_variation(&m.fiber, &direct)?);
        marginals.push(m);
    }
    sec.check(
        "fiber_marginal_is_fiber_orbit",
        None,
        worst < MARGINAL_TOL,
        format!("TV(fiber marginal, direct fiber orbit) at most {}", num(worst)),
    );
    let mut table = Table::new("fiber_marginals.csv", &["seed_a", "seed_b", "tv_base", "tv_fiber"]);
    for a in 0..marginals.len() {
        for b in a + 1..marginals.len() {
            let tb = total_variation(&marginals[a].base, &marginals[b].base)?;
            let tf = total_variation(&marginals[a].fiber, &marginals[b].fiber)?;
            table.push([a.to_string(), b.to_string(), num(tb), num(tf)]);
            sec.metric(&format!("tv_base_{a}_{b}"), num(tb));
            sec.metric(&format!("tv_fiber_{a}_{b}"), num(tf));
        }
    }
    sec.tables.push(table);
    Ok(sec)
}

/// With a circle base, each attracting circle carries a hyperbolic fixed
/// point and none is homoclinically related to another.
pub fn attractor_skeleton(cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut sec = Section::default();
    let pc = &cfg.product;
    let sc = &cfg.skeleton;
    let a = parse_matrix("product.base_matrix", &pc.base_matrix)?;
    let base = AttractingCircleBase::new(a, pc.attractors, pc.circle_eps)?;
    let mut records = Vec::new();
    let mut arcs = Vec::new();
    for th in base.attracting_angles() {
        let rec = newton_periodic(&base, &TorusPoint::new(vec![1e-3, -1e-3, th + 1e-3]), 1, 50, 1e-13)?;
        let mut list = grow_manifold(&base, &rec, ManifoldKind::Unstable, sc.arc_length, sc.resolution)?;
        list.extend(grow_manifold(&base, &rec, ManifoldKind::Stable, sc.arc_length / 4.0, sc.resolution)?);
        records.push(rec);
        arcs.push(list);
    }
    let sk = extract_skeleton(&records, &arcs, sc.intersection_tolerance)?;
    sec.warnings.extend(sk.warnings.iter().cloned());
    sec.check(
        "attractor_skeleton",
        None,
        sk.members.len() == pc.attractors,
        format!("{} of {} attracting fixed points kept", sk.members.len(), pc.attractors),
    );
    Ok(sec)
}
