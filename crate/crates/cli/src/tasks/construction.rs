//! `verify-construction`: the bump, the parameter inequalities, the
//! splitting bounds, bijectivity and the Jacobian.

use crate::config::ExperimentConfig;
use crate::context::Construction;
use crate::report::{num, Plot, Section, Table};
use crate::CliError;
use phlab::deformation::Chart;
use phlab::map::{finite_difference_jacobian, relative_frobenius_error, TorusMap};
use phlab::rng;
use phlab::torus::TorusPoint;
use rayon::prelude::*;

const SPLITTING_TOL: f64 = 1e-9;
const ROUND_TRIP_TOL: f64 = 1e-10;
const FIXED_JACOBIAN_TOL: f64 = 1e-8;
const FD_STEP: f64 = 1e-8;
const FD_TOL: f64 = 1e-5;
const BUMP_FD_TOL: f64 = 1e-6;
/// Interior fraction of the transition interval used for the derivative
/// comparison, in the normalized variable `t = (delta - |x|) / (delta / 2)`.
const FD_WINDOW: (f64, f64) = (0.05, 0.95);

pub fn run(c: &Construction, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut s = bump(c, cfg);
    s.merge(splitting(c, cfg));
    s.merge(feasibility(c));
    s.merge(bijectivity(c, cfg)?);
    s.merge(jacobians(c, cfg)?);
    Ok(s)
}

/// Plateau, support, strict decrease and derivative of `s`.
pub fn bump(c: &Construction, cfg: &ExperimentConfig) -> Section {
    let mut sec = Section::default();
    let b = &c.bump;
    let d = b.delta();
    let n = cfg.construction.bump_samples.max(2);
    let at = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;

    let plateau_bad = (0..n).map(|i| at(0.0, d / 2.0, i)).filter(|&x| b.eval(x) != 1.0 || b.eval(-x) != 1.0).count();
    sec.check(
        "bump_plateau",
        Some(1),
        plateau_bad == 0,
        format!("s = 1 at {n} points of [0, delta/2]; {plateau_bad} misses"),
    );
    let support_bad = (0..n).map(|i| at(d, 3.0 * d, i)).filter(|&x| b.eval(x) != 0.0 || b.eval(-x) != 0.0).count();
    sec.check(
        "bump_support",
        Some(1),
        support_bad == 0,
        format!("s = 0 at {n} points of [delta, 3 delta]; {support_bad} misses"),
    );

    // Open-interval samples; near the plateau the decrease shows in 1 - s.
    let xs: Vec<f64> = (1..=n).map(|i| d / 2.0 + d / 2.0 * i as f64 / (n + 1) as f64).collect();
    let mut table = Table::new("bump.csv", &["x", "s", "one_minus_s", "ds", "ds_fd", "rel_err"]);
    let non_decreasing =
        xs.windows(2).filter(|w| !(b.eval(w[1]) < b.eval(w[0]) || b.complement(w[1]) > b.complement(w[0]))).count();
    sec.check(
        "bump_strictly_decreasing",
        Some(1),
        non_decreasing == 0,
        format!("{} consecutive pairs on (delta/2, delta); {non_decreasing} not strictly decreasing", n - 1),
    );

    // Richardson-extrapolated central difference with a step scaled to the
    // distance from the nearer transition endpoint.
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for (i, &x) in xs.iter().enumerate() {
        let t = (d - x) / (d / 2.0);
        let analytic = b.derivative(x);
        let mut fd = f64::NAN;
        let mut rel = f64::NAN;
        if (FD_WINDOW.0..=FD_WINDOW.1).contains(&t) {
            let g = |y: f64| if t < 0.5 { b.eval(y) } else { -b.complement(y) };
            let central = |h: f64| (g(x + h) - g(x - h)) / (2.0 * h);
            let h = 1e-2 * (d / 2.0) * t.min(1.0 - t).powi(2);
            fd = (4.0 * central(h / 2.0) - central(h)) / 3.0;
            rel = ((fd - analytic) / analytic).abs();
            worst = worst.max(rel);
            compared += 1;
        }
        if i % 10 == 0 {
            table.push([num(x), num(b.eval(x)), num(b.complement(x)), num(analytic), num(fd), num(rel)]);
        }
    }
    sec.check(
        "bump_derivative_fd",
        Some(1),
        compared > 0 && worst < BUMP_FD_TOL,
        format!(
            "max relative error {} over {compared} points with t in [{}, {}] (tol {BUMP_FD_TOL})",
            num(worst),
            FD_WINDOW.0,
            FD_WINDOW.1
        ),
    );
    sec.metric("bump_fd_max_rel_err", num(worst));
    sec.tables.push(table);
    sec.plots.push(Plot {
        table: "bump.csv".into(),
        x: 0,
        y: 1,
        title: "bump s(x) on the transition".into(),
        log_y: false,
    });
    sec
}

/// `1 <= dP/dc <= lambda_uu / 2` and `1 <= dQ/dd <= 1 / (2 lambda_ss)`.
pub fn splitting(c: &Construction, cfg: &ExperimentConfig) -> Section {
    let mut sec = Section::default();
    let sys = &c.system;
    let r = sys.rates();
    let cc = &cfg.construction;
    let uniform = sys.uniform_chart_grid(cc.grid_nodes);
    let mut table = Table::new(
        "splitting.csv",
        &["system", "chart", "point_set", "points", "min_diag", "max_diag", "max_off_diag"],
    );
    for (chart, label, upper) in [(Chart::P, "dP/dc", r.uu / 2.0), (Chart::Q, "dQ/dd", 1.0 / (2.0 * r.ss))] {
        let sets = [
            ("grid", uniform.clone()),
            ("slab_grid", sys.slab_grid(chart, cc.grid_nodes)),
            ("random", sys.random_chart_points(chart, cc.random_points, 0.5, cfg.seed ^ 0x5eed_0002)),
        ];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut small: f64 = 0.0;
        let mut total = 0;
        for (set, pts) in &sets {
            let b = sys.splitting_bounds(chart, pts);
            table.push([
                "deformed".into(),
                format!("{chart:?}"),
                set.to_string(),
                b.points.to_string(),
                num(b.min_diag),
                num(b.max_diag),
                num(b.max_small),
            ]);
            lo = lo.min(b.min_diag);
            hi = hi.max(b.max_diag);
            small = small.max(b.max_small);
            total += b.points;
        }
        let ok = lo >= 1.0 - SPLITTING_TOL && hi <= upper + SPLITTING_TOL;
        sec.check(
            &format!("splitting_{chart:?}_diagonal"),
            Some(2),
            ok,
            format!(
                "1 <= {label} <= {} at {total} points: min {}, max {} (tol {SPLITTING_TOL})",
                num(upper),
                num(lo),
                num(hi)
            ),
        );
        sec.check(
            &format!("splitting_{chart:?}_off_diagonal"),
            None,
            small < sys.params().eps0(),
            format!("off-diagonal partials {} < eps0 = {}", num(small), num(sys.params().eps0())),
        );
    }
    // The variant with hyperbolic fixed points pulls the lower bound down to
    // 1 - eps_tilde (the center multiplier at p).
    let t = &c.tilde;
    let tr = t.rates();
    let lower = 1.0 - t.params().eps_tilde;
    for (chart, upper) in [(Chart::P, tr.uu / 2.0), (Chart::Q, 1.0 / (2.0 * tr.ss))] {
        let b = t.splitting_bounds(chart, &t.slab_grid(chart, cc.grid_nodes));
        table.push([
            "tilde".into(),
            format!("{chart:?}"),
            "slab_grid".into(),
            b.points.to_string(),
            num(b.min_diag),
            num(b.max_diag),
            num(b.max_small),
        ]);
        sec.check(
            &format!("splitting_tilde_{chart:?}"),
            None,
            b.min_diag >= lower - SPLITTING_TOL
                && b.max_diag <= upper + SPLITTING_TOL
                && b.max_small < t.params().eps0(),
            format!(
                "diagonal in [{}, {}] within [{}, {}], off-diagonal {}",
                num(b.min_diag),
                num(b.max_diag),
                num(lower),
                num(upper),
                num(b.max_small)
            ),
        );
    }
    sec.tables.push(table);
    sec
}

/// The two derivative inequalities on the computed `M` and the entropy
/// condition on `eps1`.
pub fn feasibility(c: &Construction) -> Section {
    let mut sec = Section::default();
    let ineq = &c.inequalities;
    let ent = &c.entropy;
    sec.metric("M", num(c.bound.m));
    sec.metric("M_argmin_x", num(c.bound.argmin.0));
    sec.metric("M_argmin_y", num(c.bound.argmin.1));
    sec.check(
        "inequality_unstable",
        Some(3),
        ineq.unstable.0 <= ineq.unstable.1,
        format!("M (lambda_u - 1) + lambda_u = {} <= lambda_uu / 2 = {}", num(ineq.unstable.0), num(ineq.unstable.1)),
    );
    sec.check(
        "inequality_stable",
        Some(3),
        ineq.stable.0 <= ineq.stable.1,
        format!(
            "M (1/lambda_s - 1) + 1/lambda_s = {} <= 1 / (2 lambda_ss) = {}",
            num(ineq.stable.0),
            num(ineq.stable.1)
        ),
    );
    sec.check(
        "entropy_condition",
        Some(3),
        ent.holds(),
        format!(
            "0.1 log(sqrt(1 - eps1)/sqrt(1 + eps1^2)) + 0.9 log(lambda_u/sqrt(1 + eps1^2)) = {} > 0; rates {} < 1 < {}",
            num(ent.weighted_log),
            num(ent.lower_rate),
            num(ent.upper_rate)
        ),
    );
    if let Some(out) = &c.search {
        sec.check(
            "search_consistent",
            Some(3),
            out.inequalities == *ineq && out.entropy_condition == *ent && out.m_bound == c.bound.m,
            "search outcome reproduces the recomputed inequality evaluations",
        );
        sec.metric("search_k_trials", out.k_trials);
        sec.metric("search_small_partial_bound", num(out.small_partial_bound));
        sec.metric("search_small_partial_grid", num(out.small_partial_grid));
        sec.metric("search_cone_theta", num(out.cone_theta));
    }
    sec
}

fn round_trip_points(c: &Construction, cfg: &ExperimentConfig) -> Vec<TorusPoint<f64>> {
    let cc = &cfg.construction;
    let interior = cc.chart_interior_points.min(cc.roundtrip_points);
    let mut r = rng::stream(cfg.seed ^ 0x5eed_0004, 0);
    let mut pts: Vec<TorusPoint<f64>> = (0..cc.roundtrip_points - interior)
        .map(|_| TorusPoint::new((0..4).map(|_| rng::uniform(&mut r, 0.0, 1.0)).collect()))
        .collect();
    let half = interior / 2;
    for (chart, count, stream) in [(Chart::P, half, 1u64), (Chart::Q, interior - half, 2u64)] {
        let ys = c.system.random_chart_points(chart, count, 0.5, cfg.seed ^ (0x5eed_0004 + stream));
        pts.extend(ys.iter().map(|y| c.system.chart_point(chart, y)));
    }
    pts
}

/// `I o I^-1`, `I^-1 o I`, `f o f^-1` and `f^-1 o f` on random points.
pub fn bijectivity(c: &Construction, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut sec = Section::default();
    let pts = round_trip_points(c, cfg);
    let interior = pts.iter().filter(|x| c.system.locate(x).is_some()).count();
    let mut table = Table::new("roundtrip.csv", &["system", "map", "points", "max_error"]);
    for (label, sys) in [("deformed", &c.system), ("tilde", &c.tilde)] {
        let errs = pts
            .par_iter()
            .map(|x| -> phlab::Result<[f64; 4]> {
                Ok([
                    sys.apply_deformation(&sys.apply_deformation_inverse(x)?)?.distance(x),
                    sys.apply_deformation_inverse(&sys.apply_deformation(x)?)?.distance(x),
                    sys.apply(&sys.apply_inverse(x)?)?.distance(x),
                    sys.apply_inverse(&sys.apply(x)?)?.distance(x),
                ])
            })
            .try_reduce(|| [0.0; 4], |a, b| Ok([a[0].max(b[0]), a[1].max(b[1]), a[2].max(b[2]), a[3].max(b[3])]))?;
        for (name, e) in ["I(I^-1 x)", "I^-1(I x)", "f(f^-1 x)", "f^-1(f x)"].iter().zip(errs) {
            table.push([label.to_string(), name.to_string(), pts.len().to_string(), num(e)]);
        }
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        sec.check(
            &format!("bijectivity_{label}"),
            Some(4),
            worst < ROUND_TRIP_TOL,
            format!(
                "max round-trip error {} over {} points ({interior} in a chart; tol {ROUND_TRIP_TOL})",
                num(worst),
                pts.len()
            ),
        );
    }
    sec.tables.push(table);
    Ok(sec)
}

/// Diagonal Jacobians at the fixed points and the analytic Jacobian
/// against central differences.
pub fn jacobians(c: &Construction, cfg: &ExperimentConfig) -> Result<Section, CliError> {
    let mut sec = Section::default();
    let sys = &c.system;
    let r = sys.rates();
    for (chart, diag) in [(Chart::P, [r.uu, r.ss, 1.0, r.s]), (Chart::Q, [r.uu, r.ss, r.u, 1.0])] {
        let j = sys.jacobian(sys.fixed_point(chart))?;
        let mut err: f64 = 0.0;
        for i in 0..4 {
            for k in 0..4 {
                let want = if i == k { diag[i] } else { 0.0 };
                err = err.max((j[(i, k)] - want).abs());
            }
        }
        sec.check(
            &format!("fixed_point_jacobian_{chart:?}"),
            Some(5),
            err < FIXED_JACOBIAN_TOL,
            format!(
                "max entry error against diag({}) = {} (tol {FIXED_JACOBIAN_TOL})",
                diag.map(num).join(", "),
                num(err)
            ),
        );
    }
    let pts = sys.stress_points(cfg.construction.jacobian_points, cfg.seed ^ 0x5eed_0005);
    let errs = pts
        .par_iter()
        .map(|x| -> phlab::Result<f64> {
            let fd = finite_difference_jacobian(sys, x, FD_STEP)?;
            Ok(relative_frobenius_error(&sys.jacobian(x)?, &fd))
        })
        .collect::<phlab::Result<Vec<f64>>>()?;
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    sec.check(
        "jacobian_vs_finite_difference",
        Some(5),
        worst < FD_TOL,
        format!("max relative Frobenius error {} over {} points, step {FD_STEP} (tol {FD_TOL})", num(worst), pts.len()),
    );
    let mut table = Table::new("jacobian_fd.csv", &["index", "rel_err"]);
    for (i, e) in errs.iter().enumerate() {
        table.push([i.to_string(), num(*e)]);
    }
    sec.tables.push(table);
    Ok(sec)
}
