//! Hyperbolic periodic points, their local invariant manifolds, and the
//! greedy extraction of skeleton candidates.
//!
//! Periodic points are located by Newton's method on the lift residual
//! `f^P(x) - x (mod Z^d)`. Invariant manifolds are grown by iterating a tiny
//! eigen-segment and re-inserting points (by bisecting the seed parameter)
//! wherever the polyline spacing exceeds the requested resolution.

use crate::error::{Error, Result};
use crate::map::TorusMap;
use crate::scalar::{lit, to_f64, Real};
use crate::torus::{wrap_centered, TorusPoint};
use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use std::cmp::Ordering;
use std::collections::HashMap;

/// An eigenvalue this close to 1 makes the Newton linearization singular.
pub const SINGULAR_TOL: f64 = 1e-8;
/// Records with a multiplier modulus this close to 1 are not hyperbolic.
pub const NEUTRAL_BAND: f64 = 1e-6;
/// Required torus distance between `f^P(x)` and `x` for a record.
pub const PERIODIC_RESIDUAL: f64 = 1e-10;
/// Seed directions used for two-dimensional manifolds.
pub const FAN_DIRECTIONS: usize = 64;
pub const DEFAULT_INTERSECTION_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicPointRecord<T: Real> {
    pub point: TorusPoint<T>,
    pub period: usize,
    /// Eigenvalues of `Df^period`, by decreasing modulus.
    pub eigenvalues: Vec<Complex<T>>,
    /// Their moduli.
    pub multipliers: Vec<T>,
    /// Number of multipliers of modulus below 1.
    pub stable_index: usize,
    pub hyperbolic: bool,
    /// Torus distance between `f^period(point)` and `point`.
    pub residual: T,
}

fn modulus<T: Real>(c: &Complex<T>) -> T {
    (c.re * c.re + c.im * c.im).sqrt()
}

/// `Df^period` at `x`, in frame coordinates.
fn orbit_jacobian<T: Real, S: TorusMap<T> + ?Sized>(sys: &S, x: &TorusPoint<T>, period: usize) -> Result<DMatrix<T>> {
    let d = sys.dim();
    let mut m = DMatrix::identity(d, d);
    let mut y = x.clone();
    for _ in 0..period {
        m = sys.jacobian(&y)? * m;
        y = sys.apply(&y)?;
    }
    Ok(m)
}

fn sorted_spectrum<T: Real>(m: &DMatrix<T>) -> Vec<Complex<T>> {
    let mut ev: Vec<Complex<T>> = m.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| {
        modulus(b)
            .partial_cmp(&modulus(a))
            .unwrap_or(Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(Ordering::Equal))
    });
    ev
}

/// Torus distance between `f^period(x)` and `x`, recomputed from scratch.
pub fn periodic_residual<T: Real, S: TorusMap<T> + ?Sized>(sys: &S, x: &TorusPoint<T>, period: usize) -> Result<T> {
    Ok(sys.iterate(x, period)?.distance(x))
}

/// Builds a record for a point already known to be periodic, without
/// requiring hyperbolicity (the `hyperbolic` flag reports it).
pub fn record_at<T: Real, S: TorusMap<T> + ?Sized>(
    sys: &S,
    x: &TorusPoint<T>,
    period: usize,
) -> Result<PeriodicPointRecord<T>> {
    if period == 0 {
        return Err(Error::Precondition("period must be at least 1".into()));
    }
    let residual = periodic_residual(sys, x, period)?;
    if !(residual < lit(PERIODIC_RESIDUAL)) {
        return Err(Error::Precondition(format!("point is not {period}-periodic: residual {residual}")));
    }
    let eigenvalues = sorted_spectrum(&orbit_jacobian(sys, x, period)?);
    let multipliers: Vec<T> = eigenvalues.iter().map(modulus).collect();
    let one = T::one();
    let stable_index = multipliers.iter().filter(|&&m| m < one).count();
    let hyperbolic = multipliers.iter().all(|&m| (m - one).abs() >= lit(NEUTRAL_BAND));
    Ok(PeriodicPointRecord { point: x.clone(), period, eigenvalues, multipliers, stable_index, hyperbolic, residual })
}

fn lift_residual<T: Real, S: TorusMap<T> + ?Sized>(sys: &S, x: &TorusPoint<T>, period: usize) -> Result<DVector<T>> {
    let y = sys.iterate(x, period)?;
    Ok(x.displacement_to(&y).map(wrap_centered))
}

/// Newton's method for a `period`-periodic point near `guess`.
pub fn newton_periodic<T: Real, S: TorusMap<T> + ?Sized>(
    sys: &S,
    guess: &TorusPoint<T>,
    period: usize,
    max_iter: usize,
    tol: T,
) -> Result<PeriodicPointRecord<T>> {
    if period == 0 {
        return Err(Error::Precondition("period must be at least 1".into()));
    }
    let d = sys.dim();
    let r = sys.frame();
    let rt = r.transpose();
    let mut x = guess.clone();
    let mut res = lift_residual(sys, &x, period)?;
    let mut rn = res.norm();
    let mut iterations = 0;
    while !(rn < tol) {
        if iterations == max_iter {
            return Err(Error::NoConvergence { iterations, residual: to_f64(rn) });
        }
        iterations += 1;
        let m = orbit_jacobian(sys, &x, period)?;
        for ev in sorted_spectrum(&m) {
            let gap = modulus(&Complex::new(ev.re - T::one(), ev.im));
            if gap < lit(SINGULAR_TOL) {
                return Err(Error::NonHyperbolicCandidate {
                    period,
                    multiplier: to_f64(modulus(&ev)),
                    tolerance: SINGULAR_TOL,
                });
            }
        }
        let a = &r * m * &rt - DMatrix::<T>::identity(d, d);
        let step = a.lu().solve(&(-&res)).ok_or(Error::NonHyperbolicCandidate {
            period,
            multiplier: 1.0,
            tolerance: SINGULAR_TOL,
        })?;
        // Backtrack until the residual decreases; keep the smallest step otherwise.
        let mut lambda = T::one();
        let mut accepted = None;
        for _ in 0..30 {
            let cand = x.translate(&(&step * lambda));
            let cres = lift_residual(sys, &cand, period)?;
            let cn = cres.norm();
            let done = cn < rn;
            accepted = Some((cand, cres, cn));
            if done {
                break;
            }
            lambda *= lit(0.5);
        }
        let (nx, nres, nn) = accepted.expect("at least one trial step");
        x = nx;
        res = nres;
        rn = nn;
    }
    let rec = record_at(sys, &x, period).map_err(|_| Error::NoConvergence { iterations, residual: to_f64(rn) })?;
    Ok(rec)
}

/// Outcome of launching Newton from many guesses.
#[derive(Clone, Debug)]
pub struct Census<T: Real> {
    /// Distinct records, sorted by period then lexicographically.
    pub records: Vec<PeriodicPointRecord<T>>,
    pub launches: usize,
    pub failures: usize,
    pub non_hyperbolic: usize,
}

fn record_order<T: Real>(a: &PeriodicPointRecord<T>, b: &PeriodicPointRecord<T>) -> Ordering {
    a.period.cmp(&b.period).then_with(|| lex_order(&a.point, &b.point))
}

fn lex_order<T: Real>(a: &TorusPoint<T>, b: &TorusPoint<T>) -> Ordering {
    for (x, y) in a.coords().iter().zip(b.coords()) {
        match x.partial_cmp(y).unwrap_or(Ordering::Equal) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Runs Newton from every guess in parallel and merges roots closer than
/// `dedupe_tol`.
pub fn periodic_census<T: Real, S: TorusMap<T> + ?Sized>(
    sys: &S,
    guesses: &[TorusPoint<T>],
    period: usize,
    max_iter: usize,
    tol: T,
    dedupe_tol: T,
) -> Census<T> {
    let outcomes: Vec<Result<PeriodicPointRecord<T>>> =
        guesses.par_iter().map(|g| newton_periodic(sys, g, period, max_iter, tol)).collect();
    let mut found = Vec::new();
    let mut failures = 0;
    let mut non_hyperbolic = 0;
    for o in outcomes {
        match o {
            Ok(rec) => found.push(rec),
            Err(Error::NonHyperbolicCandidate { .. }) => non_hyperbolic += 1,
            Err(_) => failures += 1,
        }
    }
    found.sort_by(record_order);
    let mut records: Vec<PeriodicPointRecord<T>> = Vec::new();
    for rec in found {
        if !records.iter().any(|r| r.point.distance(&rec.point) < dedupe_tol) {
            records.push(rec);
        }
    }
    Census { records, launches: guesses.len(), failures, non_hyperbolic }
}

/// Stable index recomputed at every point of the orbit.
pub fn orbit_stable_indices<T: Real, S: TorusMap<T> + ?Sized>(
    sys: &S,
    rec: &PeriodicPointRecord<T>,
) -> Result<Vec<usize>> {
    let mut x = rec.point.clone();
    let mut out = Vec::with_capacity(rec.period);
    for _ in 0..rec.period {
        out.push(record_at(sys, &x, rec.period)?.stable_index);
        x = sys.apply(&x)?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ManifoldKind {
    Stable,
    Unstable,
}

impl ManifoldKind {
    pub fn label(self) -> &'static str {
        match self {
            ManifoldKind::Stable => "stable",
            ManifoldKind::Unstable => "unstable",
        }
    }
}

/// Stable directions are multipliers of modulus below `1 - NEUTRAL_BAND`;
/// everything else (including neutral directions of non-hyperbolic records)
/// counts as unstable.
fn selects(kind: ManifoldKind, m: f64) -> bool {
    let stable = m < 1.0 - NEUTRAL_BAND;
    match kind {
        ManifoldKind::Stable => stable,
        ManifoldKind::Unstable => !stable,
    }
}

fn null_vectors<T: Real>(m: DMatrix<T>, count: usize) -> Vec<DVector<T>> {
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap_or(Ordering::Equal));
    order.into_iter().take(count).map(|i| vt.row(i).transpose()).collect()
}

/// Orthonormal basis (standard coordinates, as columns) of the invariant
/// subspace of `Df^period` of the given kind.
pub fn eigenspace<T: Real, S: TorusMap<T> + ?Sized>(
    sys: &S,
    rec: &PeriodicPointRecord<T>,
    kind: ManifoldKind,
) -> Result<DMatrix<T>> {
    let m = orbit_jacobian(sys, &rec.point, rec.period)?;
    let d = m.nrows();
    let chosen: Vec<Complex<T>> =
        rec.eigenvalues.iter().copied().filter(|e| selects(kind, to_f64(modulus(e)))).collect();
    if chosen.is_empty() || chosen.len() > 2 {
        return Err(Error::Precondition(format!(
            "{} eigenspace has dimension {}; only 1 or 2 are supported",
            kind.label(),
            chosen.len()
        )));
    }
    let id = DMatrix::<T>::identity(d, d);
    let is_real = |e: &Complex<T>| e.im.abs() <= lit::<T>(1e-12) * modulus(e).max(T::one());
    let mut basis: Vec<DVector<T>> = Vec::new();
    if chosen.len() == 2 && !is_real(&chosen[0]) {
        let e = chosen[0];
        let n = &m * &m - &m * (e.re + e.re) + &id * (e.re * e.re + e.im * e.im);
        basis = null_vectors(n, 2);
    } else if chosen.len() == 2 && (chosen[0].re - chosen[1].re).abs() <= lit::<T>(1e-9) * modulus(&chosen[0]) {
        basis = null_vectors(&m - &id * chosen[0].re, 2);
    } else {
        for e in &chosen {
            basis.extend(null_vectors(&m - &id * e.re, 1));
        }
    }
    let mut q = DMatrix::from_columns(&basis);
    q = sys.frame() * q;
    crate::numerics::gram_schmidt(&mut q);
    Ok(q)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthLimits {
    pub max_points: usize,
    pub max_iterations: usize,
    /// Length of the initial eigen-segment.
    pub seed_length: f64,
}

impl Default for GrowthLimits {
    fn default() -> Self {
        Self { max_points: 200_000, max_iterations: 400, seed_length: 1e-7 }
    }
}

#[derive(Clone, Debug)]
pub struct ManifoldArc<T: Real> {
    pub root: PeriodicPointRecord<T>,
    pub kind: ManifoldKind,
    /// Seed direction at the root (standard coordinates, unit length).
    pub tangent: DVector<T>,
    pub polyline: Vec<TorusPoint<T>>,
    pub arc_length: T,
    /// `false` when the point budget or iteration cap stopped the growth.
    pub complete: bool,
}

/// Grows the stable or unstable manifold of `rec` to `target_length`,
/// returning two branches for a one-dimensional eigenspace and a fan of
/// [`FAN_DIRECTIONS`] arcs for a two-dimensional one.
pub fn grow_manifold<T: Real, S: TorusMap<T> + ?Sized>(
    sys: &S,
    rec: &PeriodicPointRecord<T>,
    kind: ManifoldKind,
    target_length: T,
    resolution: T,
) -> Result<Vec<ManifoldArc<T>>> {
    grow_manifold_with(sys, rec, kind, target_length, resolution, &GrowthLimits::default())
}

pub fn grow_manifold_with<T: Real, S: TorusMap<T> + ?Sized>(
    sys: &S,
    rec: &PeriodicPointRecord<T>,
    kind: ManifoldKind,
    target_length: T,
    resolution: T,
    limits: &GrowthLimits,
) -> Result<Vec<ManifoldArc<T>>> {
    if !(resolution > T::zero() && resolution < lit(0.25)) {
        return Err(Error::Precondition("resolution must lie in (0, 1/4)".into()));
    }
    let basis = eigenspace(sys, rec, kind)?;
    let directions: Vec<DVector<T>> = if basis.ncols() == 1 {
        let v = basis.column(0).into_owned();
        vec![v.clone(), -v]
    } else {
        (0..FAN_DIRECTIONS)
            .map(|i| {
                let th = lit::<T>(std::f64::consts::TAU * i as f64 / FAN_DIRECTIONS as f64);
                basis.column(0) * th.cos() + basis.column(1) * th.sin()
            })
            .collect()
    };
    if target_length <= T::zero() {
        return Ok(vec![ManifoldArc {
            root: rec.clone(),
            kind,
            tangent: directions[0].clone(),
            polyline: vec![rec.point.clone()],
            arc_length: T::zero(),
            complete: true,
        }]);
    }
    directions.into_iter().map(|dir| grow_branch(sys, rec, kind, dir, target_length, resolution, limits)).collect()
}

fn align<T: Real>(v: &mut DVector<T>, reference: &DVector<T>) {
    for (x, &r) in v.iter_mut().zip(reference.iter()) {
        *x += (r - *x).round();
    }
}

fn grow_branch<T: Real, S: TorusMap<T> + ?Sized>(
    sys: &S,
    rec: &PeriodicPointRecord<T>,
    kind: ManifoldKind,
    dir: DVector<T>,
    target: T,
    resolution: T,
    limits: &GrowthLimits,
) -> Result<ManifoldArc<T>> {
    let step = |x: &TorusPoint<T>| -> Result<TorusPoint<T>> {
        match kind {
            ManifoldKind::Unstable => sys.iterate(x, rec.period),
            ManifoldKind::Stable => sys.iterate_inverse(x, rec.period),
        }
    };
    let h: T = lit(limits.seed_length);
    let root = rec.point.to_vector();
    let seed_point = |t: T| TorusPoint::from_vector(&(&root + &dir * (h * t)));
    let mut seeds = vec![T::zero(), T::one()];
    let mut lifts = vec![root.clone(), &root + &dir * h];
    let mut iterations = 0;
    let mut complete = false;
    'grow: loop {
        let mut cum = T::zero();
        for i in 1..lifts.len() {
            cum += (&lifts[i] - &lifts[i - 1]).norm();
            if cum >= target {
                lifts.truncate(i + 1);
                complete = true;
                break 'grow;
            }
        }
        if iterations == limits.max_iterations {
            break;
        }
        iterations += 1;
        let mut next = Vec::with_capacity(lifts.len());
        for (i, l) in lifts.iter().enumerate() {
            let mut img = step(&TorusPoint::from_vector(l))?.to_vector();
            align(&mut img, if i == 0 { &root } else { &next[i - 1] });
            next.push(img);
        }
        lifts = next;
        let mut i = 0;
        while i + 1 < lifts.len() {
            if (&lifts[i + 1] - &lifts[i]).norm() <= resolution {
                i += 1;
                continue;
            }
            let t = (seeds[i] + seeds[i + 1]) * lit(0.5);
            if lifts.len() >= limits.max_points || t <= seeds[i] || t >= seeds[i + 1] {
                break 'grow;
            }
            let mut x = seed_point(t);
            for _ in 0..iterations {
                x = step(&x)?;
            }
            let mut img = x.to_vector();
            align(&mut img, &lifts[i]);
            seeds.insert(i + 1, t);
            lifts.insert(i + 1, img);
        }
    }
    let mut arc_length = T::zero();
    for i in 1..lifts.len() {
        arc_length += (&lifts[i] - &lifts[i - 1]).norm();
    }
    Ok(ManifoldArc {
        root: rec.clone(),
        kind,
        tangent: dir,
        polyline: lifts.iter().map(TorusPoint::from_vector).collect(),
        arc_length,
        complete,
    })
}

/// Distance between segments `[p0, p1]` and `[q0, q1]` of `R^d`, with the
/// parameters of the closest points.
pub fn segment_distance<T: Real>(p0: &DVector<T>, p1: &DVector<T>, q0: &DVector<T>, q1: &DVector<T>) -> (T, T, T) {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let zero = T::zero();
    let one = T::one();
    let clamp = |x: T| x.max(zero).min(one);
    let eps: T = lit(1e-300);
    let (s, t);
    if a <= eps && e <= eps {
        s = zero;
        t = zero;
    } else if a <= eps {
        s = zero;
        t = clamp(f / e);
    } else {
        let c = d1.dot(&r);
        if e <= eps {
            t = zero;
            s = clamp(-c / a);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > eps { clamp((b * f - c * e) / denom) } else { zero };
            let mut t0 = (b * s0 + f) / e;
            if t0 < zero {
                t0 = zero;
                s0 = clamp(-c / a);
            } else if t0 > one {
                t0 = one;
                s0 = clamp((b - c) / a);
            }
            s = s0;
            t = t0;
        }
    }
    let cp = p0 + &d1 * s;
    let cq = q0 + &d2 * t;
    ((cp - cq).norm(), s, t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeteroclinicEvidence<T: Real> {
    /// Smallest torus distance found between the two polylines.
    pub min_distance: T,
    /// Closest points: on the unstable arc, then on the stable arc.
    pub witness: (TorusPoint<T>, TorusPoint<T>),
    pub intersects: bool,
    /// `min_distance` lies in `[tol, 10 tol)`.
    pub inconclusive: bool,
    /// `false` when no pair came within `10 tol` and the search skipped the
    /// all-pairs fallback; `min_distance` is then only an upper bound.
    pub exhaustive: bool,
}

/// Segments as (start, end) with the end unwrapped next to the start.
fn segments<T: Real>(arc: &ManifoldArc<T>) -> Vec<(DVector<T>, DVector<T>)> {
    let pts = &arc.polyline;
    if pts.len() == 1 {
        let p = pts[0].to_vector();
        return vec![(p.clone(), p)];
    }
    pts.windows(2)
        .map(|w| {
            let a = w[0].to_vector();
            let b = &a + w[0].displacement_to(&w[1]);
            (a, b)
        })
        .collect()
}

const BRUTE_FORCE_PAIRS: usize = 4_000_000;

/// Minimal distance between an unstable arc and a stable arc.
pub fn heteroclinic_test<T: Real>(a1: &ManifoldArc<T>, a2: &ManifoldArc<T>, tol: T) -> Result<HeteroclinicEvidence<T>> {
    if a1.kind != ManifoldKind::Unstable || a2.kind != ManifoldKind::Stable {
        return Err(Error::Precondition("expected an unstable arc and a stable arc".into()));
    }
    let d = a1.root.point.dim();
    if a2.root.point.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: a2.root.point.dim() });
    }
    let s1 = segments(a1);
    let s2 = segments(a2);
    let seg_len = |s: &(DVector<T>, DVector<T>)| (&s.1 - &s.0).norm();
    let res = s1.iter().chain(&s2).map(seg_len).fold(T::zero(), |a, b| a.max(b));
    let ten_tol = tol * lit(10.0);
    let reach = ten_tol + res + res;

    let mut best: Option<(T, DVector<T>, DVector<T>)> = None;
    let consider =
        |best: &mut Option<(T, DVector<T>, DVector<T>)>, x: &(DVector<T>, DVector<T>), y: &(DVector<T>, DVector<T>)| {
            let shift = (&y.0 - &x.0).map(wrap_centered);
            let q0 = &x.0 + shift;
            let q1 = &q0 + (&y.1 - &y.0);
            let (dist, s, t) = segment_distance(&x.0, &x.1, &q0, &q1);
            if best.as_ref().is_none_or(|b| dist < b.0) {
                let cp = &x.0 + (&x.1 - &x.0) * s;
                let cq = &q0 + (&q1 - &q0) * t;
                *best = Some((dist, cp, cq));
            }
        };

    let cells = (T::one() / reach).floor();
    let n = if reach < lit(1.0 / 3.0) { to_f64(cells) as i64 } else { 0 };
    let mut exhaustive = true;
    if n >= 3 && d <= 6 {
        let nf: T = lit(n as f64);
        let key = |v: &DVector<T>| -> Vec<i64> {
            v.iter().map(|&c| (to_f64((crate::torus::reduce(c) * nf).floor()) as i64).rem_euclid(n)).collect()
        };
        let mut table: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (j, s) in s2.iter().enumerate() {
            table.entry(key(&s.0)).or_default().push(j);
        }
        let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
            .map(|mut c| {
                (0..d)
                    .map(|_| {
                        let o = (c % 3) as i64 - 1;
                        c /= 3;
                        o
                    })
                    .collect()
            })
            .collect();
        for x in &s1 {
            let k = key(&x.0);
            for off in &offsets {
                let nk: Vec<i64> = k.iter().zip(off).map(|(a, b)| (a + b).rem_euclid(n)).collect();
                if let Some(list) = table.get(&nk) {
                    for &j in list {
                        consider(&mut best, x, &s2[j]);
                    }
                }
            }
        }
        let close = best.as_ref().is_some_and(|b| b.0 < ten_tol);
        if !close {
            if s1.len().saturating_mul(s2.len()) <= BRUTE_FORCE_PAIRS {
                for x in &s1 {
                    for y in &s2 {
                        consider(&mut best, x, y);
                    }
                }
            } else {
                exhaustive = false;
            }
        }
    } else {
        for x in &s1 {
            for y in &s2 {
                consider(&mut best, x, y);
            }
        }
    }
    let (dist, cp, cq) = match best {
        Some(b) => b,
        None => {
            // Only possible without any candidate pair; report the roots.
            let p = a1.root.point.to_vector();
            let q = a2.root.point.to_vector();
            (a1.root.point.distance(&a2.root.point), p, q)
        }
    };
    Ok(HeteroclinicEvidence {
        min_distance: dist,
        witness: (TorusPoint::from_vector(&cp), TorusPoint::from_vector(&cq)),
        intersects: dist < tol,
        inconclusive: dist >= tol && dist < ten_tol,
        exhaustive,
    })
}

/// `evidence[i][j]` tests `W^u(p_j)` against `W^s(p_i)`; the diagonal is empty.
pub type EvidenceMatrix<T> = Vec<Vec<Option<HeteroclinicEvidence<T>>>>;

#[derive(Clone, Debug)]
pub struct SkeletonCandidate<T: Real> {
    pub members: Vec<PeriodicPointRecord<T>>,
    /// Indices of the members in the input record list.
    pub member_indices: Vec<usize>,
    pub evidence: EvidenceMatrix<T>,
    pub warnings: Vec<String>,
}

fn merge_evidence<T: Real>(a: HeteroclinicEvidence<T>, b: HeteroclinicEvidence<T>) -> HeteroclinicEvidence<T> {
    let exhaustive = a.exhaustive && b.exhaustive;
    let mut e = if b.min_distance < a.min_distance { b } else { a };
    e.exhaustive = exhaustive;
    e
}

/// Pairwise connection evidence; `arcs[i]` holds every arc grown from
/// `records[i]` (both kinds).
pub fn connection_evidence<T: Real>(
    records: &[PeriodicPointRecord<T>],
    arcs: &[Vec<ManifoldArc<T>>],
    tol: T,
) -> Result<EvidenceMatrix<T>> {
    let n = records.len();
    if arcs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: arcs.len() });
    }
    let of_kind =
        |i: usize, k: ManifoldKind| -> Vec<&ManifoldArc<T>> { arcs[i].iter().filter(|a| a.kind == k).collect() };
    for i in 0..n {
        if n > 1 && (of_kind(i, ManifoldKind::Stable).is_empty() || of_kind(i, ManifoldKind::Unstable).is_empty()) {
            return Err(Error::Precondition(format!("record {i} needs both stable and unstable arcs")));
        }
    }
    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    type PairEvidence<T> = Result<((usize, usize), HeteroclinicEvidence<T>)>;
    let results: Vec<PairEvidence<T>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut acc: Option<HeteroclinicEvidence<T>> = None;
            for u in of_kind(j, ManifoldKind::Unstable) {
                for s in of_kind(i, ManifoldKind::Stable) {
                    let e = heteroclinic_test(u, s, tol)?;
                    acc = Some(match acc {
                        None => e,
                        Some(a) => merge_evidence(a, e),
                    });
                }
            }
            Ok(((i, j), acc.expect("arcs checked above")))
        })
        .collect();
    let mut m: EvidenceMatrix<T> = vec![vec![None; n]; n];
    for r in results {
        let ((i, j), e) = r?;
        m[i][j] = Some(e);
    }
    Ok(m)
}

/// Greedy selection: records are visited by increasing period, then in
/// lexicographic point order, and kept unless some kept member is connected
/// to them in both directions.
pub fn select_skeleton<T: Real>(
    records: &[PeriodicPointRecord<T>],
    evidence: EvidenceMatrix<T>,
) -> SkeletonCandidate<T> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| record_order(&records[a], &records[b]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    let mut warnings = Vec::new();
    let status = |i: usize, j: usize| -> (bool, bool) {
        evidence[i][j].as_ref().map_or((false, false), |e| (e.intersects, e.inconclusive))
    };
    for &c in &order {
        let mut conflict = None;
        for &k in &kept {
            let (ij, ij_maybe) = status(c, k);
            let (ji, ji_maybe) = status(k, c);
            if ij && ji {
                conflict = Some(k);
                break;
            }
            if (ij || ij_maybe) && (ji || ji_maybe) {
                warnings
                    .push(format!("records {c} and {k}: mutual connection inconclusive at the intersection tolerance"));
            }
        }
        match conflict {
            Some(k) => warnings.push(format!("record {c} dropped: connected both ways with record {k}")),
            None => kept.push(c),
        }
    }
    kept.sort_unstable();
    SkeletonCandidate {
        members: kept.iter().map(|&i| records[i].clone()).collect(),
        member_indices: kept,
        evidence,
        warnings,
    }
}

/// Validates the records, gathers the pairwise evidence, and selects a
/// skeleton candidate.
pub fn extract_skeleton<T: Real>(
    records: &[PeriodicPointRecord<T>],
    arcs: &[Vec<ManifoldArc<T>>],
    tol: T,
) -> Result<SkeletonCandidate<T>> {
    if let Some(first) = records.first() {
        for (i, r) in records.iter().enumerate() {
            if !r.hyperbolic {
                return Err(Error::Precondition(format!("record {i} is not hyperbolic")));
            }
            if r.stable_index != first.stable_index {
                return Err(Error::Precondition(format!(
                    "record {i} has stable index {}, expected {}",
                    r.stable_index, first.stable_index
                )));
            }
            for (j, s) in records.iter().enumerate().take(i) {
                if r.point.distance(&s.point) < lit(PERIODIC_RESIDUAL) {
                    return Err(Error::Precondition(format!("records {j} and {i} coincide")));
                }
            }
        }
    }
    let evidence = connection_evidence(records, arcs, tol)?;
    Ok(select_skeleton(records, evidence))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformation::search::{search_params, SearchCaps};
    use crate::deformation::{Chart, DeformedSystem};
    use crate::torus_linear::{enumerate_periodic, fixed_point_count, IntegerMatrix, ToralAutomorphism};
    use std::sync::OnceLock;

    fn cat() -> ToralAutomorphism<f64> {
        ToralAutomorphism::new(IntegerMatrix::cat()).unwrap()
    }

    fn deformed() -> &'static DeformedSystem<f64> {
        static SYS: OnceLock<DeformedSystem<f64>> = OnceLock::new();
        SYS.get_or_init(|| {
            let b = crate::bump::make_bump(1.0f64 / 40.0).unwrap();
            let bound = crate::bump::compute_m(&b, &crate::bump::BumpBoundSearch::standard(&b)).unwrap();
            DeformedSystem::new(search_params(&bound, &SearchCaps::default()).unwrap().params).unwrap()
        })
    }

    fn golden() -> f64 {
        (3.0 + 5f64.sqrt()) / 2.0
    }

    #[test]
    fn newton_finds_cat_fixed_point() {
        let rec = newton_periodic(&cat(), &TorusPoint::new(vec![0.03, 0.97]), 1, 20, 1e-13).unwrap();
        assert!(rec.point.distance(&TorusPoint::origin(2)) < 1e-12);
        assert!((rec.multipliers[0] - golden()).abs() < 1e-12);
        assert!((rec.multipliers[1] - 1.0 / golden()).abs() < 1e-12);
        assert_eq!(rec.stable_index, 1);
        assert!(rec.hyperbolic && rec.residual < 1e-10);
    }

    #[test]
    fn census_matches_integer_counts() {
        let sys = cat();
        for n in 1..=5u32 {
            let guesses: Vec<TorusPoint<f64>> = enumerate_periodic::<f64>(&IntegerMatrix::cat(), n)
                .unwrap()
                .iter()
                .enumerate()
                .map(|(i, p)| p.translate(&DVector::from_vec(vec![1e-4 * ((i % 7) as f64 - 3.0), -2e-4])))
                .collect();
            let census = periodic_census(&sys, &guesses, n as usize, 30, 1e-12, 1e-8);
            let expected = fixed_point_count(&IntegerMatrix::cat(), n).unwrap() as usize;
            assert_eq!(census.records.len(), expected, "period {n}");
            assert_eq!(census.failures + census.non_hyperbolic, 0);
            for r in &census.records {
                assert!(periodic_residual(&sys, &r.point, n as usize).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn newton_reports_failures() {
        let sys = cat();
        let far = TorusPoint::new(vec![0.3, 0.1]);
        assert!(matches!(newton_periodic(&sys, &far, 1, 0, 1e-12), Err(Error::NoConvergence { iterations: 0, .. })));
        assert!(matches!(newton_periodic(&sys, &far, 0, 5, 1e-12), Err(Error::Precondition(_))));
        // At p the untilded map has a unit center multiplier.
        let p = deformed().fixed_point(Chart::P).translate(&DVector::from_vec(vec![1e-9, 0.0, 0.0, 0.0]));
        assert!(matches!(
            newton_periodic(deformed(), &p, 1, 20, 1e-12),
            Err(Error::NonHyperbolicCandidate { period: 1, .. })
        ));
    }

    #[test]
    fn tilde_fixed_points_have_expected_indices() {
        let tilde = deformed().with_eps_tilde(0.1).unwrap();
        let off = DVector::from_vec(vec![1e-7, -1e-7, 2e-7, 1e-7]);
        let p = newton_periodic(&tilde, &tilde.fixed_point(Chart::P).translate(&off), 1, 50, 1e-13).unwrap();
        let q = newton_periodic(&tilde, &tilde.fixed_point(Chart::Q).translate(&off), 1, 50, 1e-13).unwrap();
        assert_eq!(p.stable_index, 3);
        assert_eq!(q.stable_index, 1);
        assert!(p.hyperbolic && q.hyperbolic);
        assert!(p.point.distance(tilde.fixed_point(Chart::P)) < 1e-10);
        assert!(q.point.distance(tilde.fixed_point(Chart::Q)) < 1e-10);
    }

    #[test]
    fn stable_index_constant_along_orbit() {
        let sys = cat();
        let pts = enumerate_periodic::<f64>(&IntegerMatrix::cat(), 3).unwrap();
        for p in pts {
            let rec = record_at(&sys, &p, 3).unwrap();
            assert!(orbit_stable_indices(&sys, &rec).unwrap().iter().all(|&s| s == rec.stable_index));
        }
    }

    fn direction_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let a = a.normalize();
        let b = b.normalize();
        (1.0 - a.dot(&b).abs()).max(0.0).sqrt()
    }

    #[test]
    fn cat_unstable_arc_is_a_straight_line() {
        let sys = cat();
        let rec = record_at(&sys, &TorusPoint::origin(2), 1).unwrap();
        let arcs = grow_manifold(&sys, &rec, ManifoldKind::Unstable, 2.5, 1e-2).unwrap();
        assert_eq!(arcs.len(), 2);
        let v = sys.splitting().eigenvectors[0].clone();
        for arc in &arcs {
            assert!(arc.complete && arc.arc_length >= 2.5);
            assert_eq!(arc.polyline[0], rec.point);
            for w in arc.polyline.windows(2) {
                let seg = w[0].displacement_to(&w[1]);
                assert!(seg.norm() <= 1e-2 + 1e-12);
                assert!(direction_error(&seg, &v) < 1e-6);
            }
        }
    }

    #[test]
    fn zero_target_returns_root() {
        let sys = cat();
        let rec = record_at(&sys, &TorusPoint::origin(2), 1).unwrap();
        let arcs = grow_manifold(&sys, &rec, ManifoldKind::Stable, 0.0, 1e-2).unwrap();
        assert_eq!(arcs.len(), 1);
        assert_eq!(arcs[0].polyline, vec![rec.point.clone()]);
        assert_eq!(arcs[0].arc_length, 0.0);
    }

    #[test]
    fn deformed_fan_is_tangent_to_center_unstable_plane() {
        let sys = deformed();
        let rec = record_at(sys, sys.fixed_point(Chart::P), 1).unwrap();
        assert!(!rec.hyperbolic);
        let arcs = grow_manifold(sys, &rec, ManifoldKind::Unstable, 0.05, 5e-3).unwrap();
        assert_eq!(arcs.len(), FAN_DIRECTIONS);
        let f = sys.frame4();
        let plane = [f.column(0).into_owned(), f.column(2).into_owned()];
        let off_plane = |v: &DVector<f64>| {
            let v = v.normalize();
            let mut r = v.clone();
            for e in &plane {
                let e = DVector::from_column_slice(e.as_slice());
                r -= &e * e.dot(&v);
            }
            r.norm()
        };
        let mut grown = 0;
        for arc in &arcs {
            assert!(off_plane(&arc.tangent) < 1e-9);
            if arc.polyline.len() > 1 {
                let first = arc.polyline[0].displacement_to(&arc.polyline[1]);
                assert!(off_plane(&first) < 1e-6, "first segment leaves the plane");
            }
            if arc.complete {
                grown += 1;
            }
        }
        // Pure center seeds sit on a segment of fixed points and cannot grow.
        assert!(grown >= FAN_DIRECTIONS - 2);
        // q carries a three-dimensional weak-unstable space.
        let rq = record_at(sys, sys.fixed_point(Chart::Q), 1).unwrap();
        assert!(matches!(grow_manifold(sys, &rq, ManifoldKind::Unstable, 0.1, 1e-2), Err(Error::Precondition(_))));
    }

    #[test]
    fn arcs_are_forward_invariant() {
        let sys = deformed().with_eps_tilde(0.1).unwrap();
        let res = 2e-3;
        for (chart, kind) in [(Chart::P, ManifoldKind::Unstable), (Chart::Q, ManifoldKind::Stable)] {
            let rec = record_at(&sys, sys.fixed_point(chart), 1).unwrap();
            for arc in grow_manifold(&sys, &rec, kind, 0.2, res).unwrap() {
                let segs = segments(&arc);
                let mut cum = 0.0;
                for w in arc.polyline.windows(2) {
                    cum += w[0].distance(&w[1]);
                    // Images (unstable) or preimages (stable) of the inner part stay on the arc.
                    if cum > 0.2 / 20.0 {
                        break;
                    }
                    let img = match kind {
                        ManifoldKind::Unstable => sys.apply(&w[1]).unwrap(),
                        ManifoldKind::Stable => sys.apply_inverse(&w[1]).unwrap(),
                    };
                    let pt = img.to_vector();
                    let d = segs
                        .iter()
                        .map(|(a, b)| {
                            let shift = (a - &pt).map(wrap_centered);
                            let q = &pt + shift;
                            segment_distance(a, b, &q, &q).0
                        })
                        .fold(f64::INFINITY, f64::min);
                    assert!(d < res, "{} arc not invariant: {d}", kind.label());
                }
            }
        }
    }

    #[test]
    fn segment_distance_matches_sampling() {
        let v = |a: f64, b: f64, c: f64| DVector::from_vec(vec![a, b, c]);
        let cases = [
            (v(0., 0., 0.), v(1., 0., 0.), v(0.5, 1., -1.), v(0.5, 1., 1.)),
            (v(0., 0., 0.), v(1., 1., 0.), v(2., 2., 0.), v(3., 3., 1.)),
            (v(0., 0., 0.), v(0., 0., 0.), v(0., 1., 0.), v(1., 1., 0.)),
            (v(0., 0., 0.), v(1., 0., 0.), v(0.2, 0.3, 0.), v(0.7, 0.3, 0.)),
        ];
        for (p0, p1, q0, q1) in cases {
            let (d, _, _) = segment_distance(&p0, &p1, &q0, &q1);
            let mut brute = f64::INFINITY;
            for i in 0..=400 {
                for j in 0..=400 {
                    let a = &p0 + (&p1 - &p0) * (i as f64 / 400.0);
                    let b = &q0 + (&q1 - &q0) * (j as f64 / 400.0);
                    brute = brute.min((a - b).norm());
                }
            }
            assert!(d <= brute + 1e-12 && brute - d < 1e-2, "{d} vs {brute}");
        }
    }

    fn period_two_point() -> TorusPoint<f64> {
        enumerate_periodic::<f64>(&IntegerMatrix::cat(), 2)
            .unwrap()
            .into_iter()
            .find(|p| p.coords().iter().any(|&c| c != 0.0))
            .unwrap()
    }

    #[test]
    fn heteroclinic_distances() {
        let sys = cat();
        let o = record_at(&sys, &TorusPoint::origin(2), 1).unwrap();
        let u = grow_manifold(&sys, &o, ManifoldKind::Unstable, 0.3, 1e-2).unwrap();
        let s = grow_manifold(&sys, &o, ManifoldKind::Stable, 0.3, 1e-2).unwrap();
        let e = heteroclinic_test(&u[0], &s[0], 1e-4).unwrap();
        assert!(e.min_distance < 1e-15 && e.intersects);
        assert!(heteroclinic_test(&s[0], &u[0], 1e-4).is_err());

        let p2 = record_at(&sys, &period_two_point(), 2).unwrap();
        let short_u = grow_manifold(&sys, &o, ManifoldKind::Unstable, 1e-3, 1e-4).unwrap();
        let short_s = grow_manifold(&sys, &p2, ManifoldKind::Stable, 1e-3, 1e-4).unwrap();
        let e = heteroclinic_test(&short_u[0], &short_s[0], 1e-4).unwrap();
        let sep = o.point.distance(&p2.point);
        assert!((e.min_distance - sep).abs() <= 2.1e-3 && !e.intersects && !e.inconclusive);

        let mut last = f64::INFINITY;
        for len in [0.2, 1.0, 4.0] {
            let u = grow_manifold(&sys, &o, ManifoldKind::Unstable, len, 1e-2).unwrap();
            let s = grow_manifold(&sys, &p2, ManifoldKind::Stable, len, 1e-2).unwrap();
            let d = heteroclinic_test(&u[0], &s[0], 1e-4).unwrap().min_distance;
            assert!(d <= last + 1e-15);
            last = d;
        }
        assert!(last < 1e-4);
    }

    fn all_arcs(sys: &ToralAutomorphism<f64>, rec: &PeriodicPointRecord<f64>, len: f64) -> Vec<ManifoldArc<f64>> {
        let mut v = grow_manifold(sys, rec, ManifoldKind::Unstable, len, 1e-2).unwrap();
        v.extend(grow_manifold(sys, rec, ManifoldKind::Stable, len, 1e-2).unwrap());
        v
    }

    #[test]
    fn skeleton_selection_rules() {
        let sys = cat();
        let o = record_at(&sys, &TorusPoint::origin(2), 1).unwrap();
        let p2 = record_at(&sys, &period_two_point(), 2).unwrap();

        let single = extract_skeleton(std::slice::from_ref(&o), &[all_arcs(&sys, &o, 0.5)], 1e-4).unwrap();
        assert_eq!(single.member_indices, vec![0]);

        // Long arcs of a linear Anosov map connect everything both ways.
        let records = vec![p2.clone(), o.clone()];
        let arcs = vec![all_arcs(&sys, &p2, 4.0), all_arcs(&sys, &o, 4.0)];
        let sk = extract_skeleton(&records, &arcs, 1e-4).unwrap();
        assert_eq!(sk.member_indices, vec![1], "lower period survives");
        let again = select_skeleton(&records, sk.evidence.clone());
        assert_eq!(again.member_indices, sk.member_indices);

        // Short arcs stay apart: both retained.
        let arcs = vec![all_arcs(&sys, &p2, 1e-3), all_arcs(&sys, &o, 1e-3)];
        let sk = extract_skeleton(&records, &arcs, 1e-4).unwrap();
        assert_eq!(sk.member_indices, vec![0, 1]);
        assert!(sk.warnings.is_empty());

        let dup = vec![o.clone(), o.clone()];
        assert!(extract_skeleton(&dup, &[vec![], vec![]], 1e-4).is_err());
    }
}
