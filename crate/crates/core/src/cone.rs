//! Cone fields, sampled invariance checks and dominated-splitting extraction.

use crate::error::{Error, Result};
use crate::map::{StrongUnstable, TorusMap};
use crate::numerics::line_separation;
use crate::rng;
use crate::scalar::{from_usize, lit, Real};
use crate::torus::TorusPoint;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Reference directions (frame coordinates) of the four invariant bundles.
#[derive(Clone, Debug)]
pub struct BundleAxes<T> {
    pub uu: DVector<T>,
    pub cu: DVector<T>,
    pub cs: DVector<T>,
    pub ss: DVector<T>,
}

/// A system with a dominated splitting `E^uu + (E^cu + E^cs) + E^ss` whose
/// center plane `span(cu, cs)` (frame coordinates) is invariant.
pub trait SplitSystem<T: Real>: StrongUnstable<T> {
    fn bundle_axes(&self) -> BundleAxes<T>;
}

/// The cone `{v = v1 + v2 : |v1| <= width |v2|}` with `v2` in the core
/// subspace and `v1` in the complement.
#[derive(Clone, Debug)]
pub struct ConeField<T: Real> {
    core: DMatrix<T>,
    complement: DMatrix<T>,
    width: T,
    coefficients: DMatrix<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeMembership<T> {
    pub inside: bool,
    /// `|v1| / |v2|` (infinite when `v2 = 0`).
    pub ratio: T,
    /// `width - ratio`.
    pub margin: T,
    /// Relative size of the part of `v` outside `core + complement`.
    pub off_subspace: T,
}

fn stack<T: Real>(cols: &[DVector<T>], dim: usize) -> DMatrix<T> {
    if cols.is_empty() {
        return DMatrix::zeros(dim, 0);
    }
    DMatrix::from_columns(cols)
}

impl<T: Real> ConeField<T> {
    pub fn new(core: &[DVector<T>], complement: &[DVector<T>], width: T) -> Result<Self> {
        let dim =
            core.first().map(|v| v.len()).ok_or_else(|| Error::Precondition("cone core must be nonempty".into()))?;
        if !(width > T::zero()) {
            return Err(Error::Precondition("cone width must be positive".into()));
        }
        if core.iter().chain(complement).any(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: 0 });
        }
        let core_m = stack(core, dim);
        let comp_m = stack(complement, dim);
        let mut all = core.to_vec();
        all.extend_from_slice(complement);
        let b = stack(&all, dim);
        let gram = b.transpose() * &b;
        let inv = gram.try_inverse().ok_or_else(|| Error::Precondition("cone subspaces are not independent".into()))?;
        let coefficients = inv * b.transpose();
        Ok(Self { core: core_m, complement: comp_m, width, coefficients })
    }

    pub fn width(&self) -> T {
        self.width
    }

    pub fn with_width(&self, width: T) -> Self {
        Self { width, ..self.clone() }
    }

    pub fn core(&self) -> &DMatrix<T> {
        &self.core
    }

    pub fn complement(&self) -> &DMatrix<T> {
        &self.complement
    }

    /// `(v1, v2, off-subspace residual)`.
    pub fn decompose(&self, v: &DVector<T>) -> (DVector<T>, DVector<T>, DVector<T>) {
        let coef = &self.coefficients * v;
        let kc = self.core.ncols();
        let v2 = &self.core * coef.rows(0, kc);
        let v1 = if self.complement.ncols() > 0 {
            &self.complement * coef.rows(kc, self.complement.ncols())
        } else {
            DVector::zeros(v.len())
        };
        let rest = v - &v1 - &v2;
        (v1, v2, rest)
    }

    pub fn ratio(&self, v: &DVector<T>) -> (T, T) {
        let (v1, v2, rest) = self.decompose(v);
        let n2 = v2.norm();
        let ratio = if n2 > T::zero() { v1.norm() / n2 } else { T::max_value().unwrap() };
        (ratio, rest.norm() / v.norm())
    }
}

pub fn cone_contains<T: Real>(cone: &ConeField<T>, v: &DVector<T>) -> Result<ConeMembership<T>> {
    if v.len() != cone.core.nrows() {
        return Err(Error::DimensionMismatch { expected: cone.core.nrows(), found: v.len() });
    }
    if v.norm() == T::zero() {
        return Err(Error::Precondition("cone membership of the zero vector".into()));
    }
    let (ratio, off) = cone.ratio(v);
    let tol: T = lit(1e-9);
    Ok(ConeMembership {
        inside: ratio <= cone.width && off <= tol,
        ratio,
        margin: cone.width - ratio,
        off_subspace: off,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Debug)]
pub struct InvarianceReport<T> {
    pub direction: Direction,
    /// `max |w1| / (width |w2|)` over sampled images `w`.
    pub theta: T,
    /// `min |w| / |v|` over sampled vectors.
    pub growth: T,
    pub samples: usize,
    /// Images leaving the cone (or the cone's ambient subspace).
    pub violations: usize,
    /// Largest relative off-subspace component of an image.
    pub max_off_subspace: T,
    /// Base point and vector of the worst image.
    pub witness: Option<(TorusPoint<T>, DVector<T>)>,
}

impl<T: Real> InvarianceReport<T> {
    /// `Df(C) ⊂ C_{theta width}` with `theta < 1` on every sample.
    pub fn invariant(&self) -> bool {
        self.violations == 0 && self.theta < T::one()
    }

    /// Invariant and uniformly expanding.
    pub fn unstable(&self) -> bool {
        self.invariant() && self.growth > T::one()
    }
}

/// Deterministic and random vectors of the cone: first `core_0 + width *
/// complement_l` for each complement axis (boundary vectors), then random
/// mixtures, half of them on the boundary.
fn cone_samples<T: Real>(cone: &ConeField<T>, count: usize, rng: &mut impl rand::Rng) -> Vec<DVector<T>> {
    let mut out = Vec::with_capacity(count);
    let c0 = cone.core.column(0).into_owned();
    for l in 0..cone.complement.ncols() {
        if out.len() >= count {
            break;
        }
        out.push(&c0 + cone.complement.column(l) * cone.width);
    }
    let dim = cone.core.nrows();
    while out.len() < count {
        let g2 = DVector::from_fn(cone.core.ncols(), |_, _| rng::normal::<T, _>(rng));
        let v2 = (&cone.core * g2).normalize();
        let v = if cone.complement.ncols() > 0 {
            let g1 = DVector::from_fn(cone.complement.ncols(), |_, _| rng::normal::<T, _>(rng));
            let v1 = &cone.complement * g1;
            let n1 = v1.norm();
            let rho = if out.len() % 2 == 0 { T::one() } else { rng::uniform(rng, T::zero(), T::one()) };
            let v1 = if n1 > T::zero() { v1 * (cone.width * rho / n1) } else { DVector::zeros(dim) };
            &v2 + v1
        } else {
            v2
        };
        out.push(v);
    }
    out
}

/// Samples `vectors_per_point` cone vectors at each point, maps them with
/// `Df` (forward) or `Df^{-1}` (backward) and records the contraction
/// ratio `theta` and the minimal expansion `growth`.
pub fn verify_invariance<T: Real, S: TorusMap<T> + ?Sized>(
    sys: &S,
    cone: &ConeField<T>,
    direction: Direction,
    points: &[TorusPoint<T>],
    vectors_per_point: usize,
    seed: u64,
) -> Result<InvarianceReport<T>> {
    if points.is_empty() || vectors_per_point == 0 {
        return Err(Error::Precondition("need at least one point and one vector".into()));
    }
    type PointResult<T> = (T, T, usize, T, Option<(T, DVector<T>)>);
    let per_point: Vec<PointResult<T>> = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| -> Result<PointResult<T>> {
            let m = match direction {
                Direction::Forward => sys.jacobian(x)?,
                Direction::Backward => sys.jacobian_inverse_at_preimage(x)?,
            };
            let mut r = rng::stream(seed, i as u64);
            let mut theta = T::zero();
            let mut growth = T::max_value().unwrap();
            let mut violations = 0;
            let mut off_max = T::zero();
            let mut worst: Option<(T, DVector<T>)> = None;
            for v in cone_samples(cone, vectors_per_point, &mut r) {
                let w = &m * &v;
                let (ratio, off) = cone.ratio(&w);
                let th = ratio / cone.width;
                growth = growth.min(w.norm() / v.norm());
                off_max = off_max.max(off);
                if th > T::one() || off > lit(1e-9) {
                    violations += 1;
                }
                if worst.as_ref().is_none_or(|(t, _)| th > *t) {
                    worst = Some((th, v));
                }
                theta = theta.max(th);
            }
            Ok((theta, growth, violations, off_max, worst))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = InvarianceReport {
        direction,
        theta: T::zero(),
        growth: T::max_value().unwrap(),
        samples: points.len() * vectors_per_point,
        violations: 0,
        max_off_subspace: T::zero(),
        witness: None,
    };
    let mut worst_theta = -T::one();
    for (x, (theta, growth, viol, off, worst)) in points.iter().zip(per_point) {
        report.growth = report.growth.min(growth);
        report.violations += viol;
        report.max_off_subspace = report.max_off_subspace.max(off);
        if theta > worst_theta {
            worst_theta = theta;
            report.witness = worst.map(|(_, v)| (x.clone(), v));
        }
        report.theta = report.theta.max(theta);
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConeCondition {
    /// `C(E^uu)` is `Df`-invariant and expanded.
    StrongUnstable,
    /// `C(E^ss)` is `Df^{-1}`-invariant and expanded.
    StrongStable,
    /// The center plane is invariant in both directions.
    CenterPlane,
    /// `C(E^cu, E^cs)` is `Df`-invariant within the center plane.
    CenterUnstable,
    /// `C(E^cs, E^cu)` is `Df^{-1}`-invariant within the center plane.
    CenterStable,
}

impl ConeCondition {
    pub const ALL: [ConeCondition; 5] = [
        ConeCondition::StrongUnstable,
        ConeCondition::StrongStable,
        ConeCondition::CenterPlane,
        ConeCondition::CenterUnstable,
        ConeCondition::CenterStable,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ConeCondition::StrongUnstable => "uu-cone-unstable",
            ConeCondition::StrongStable => "ss-cone-unstable",
            ConeCondition::CenterPlane => "center-plane-invariant",
            ConeCondition::CenterUnstable => "cu-cone-invariant",
            ConeCondition::CenterStable => "cs-cone-invariant",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConeConditionResult<T> {
    pub condition: ConeCondition,
    pub reports: Vec<InvarianceReport<T>>,
    pub passed: bool,
}

impl<T: Real> ConeConditionResult<T> {
    pub fn theta(&self) -> T {
        self.reports.iter().fold(T::zero(), |m, r| m.max(r.theta))
    }

    pub fn growth(&self) -> T {
        self.reports.iter().fold(T::max_value().unwrap(), |m, r| m.min(r.growth))
    }

    pub fn violations(&self) -> usize {
        self.reports.iter().map(|r| r.violations).sum()
    }
}

/// Runs all five cone conditions with cones of the given width.
pub fn verify_cone_program<T: Real, S: SplitSystem<T>>(
    sys: &S,
    width: T,
    points: &[TorusPoint<T>],
    vectors_per_point: usize,
    seed: u64,
) -> Result<Vec<ConeConditionResult<T>>> {
    let ax = sys.bundle_axes();
    let mut out = Vec::with_capacity(5);
    for (idx, cond) in ConeCondition::ALL.into_iter().enumerate() {
        let s = seed.wrapping_add(idx as u64 * 0x9E37_79B9);
        let result = match cond {
            ConeCondition::StrongUnstable => {
                let cone = ConeField::new(
                    std::slice::from_ref(&ax.uu),
                    &[ax.cu.clone(), ax.cs.clone(), ax.ss.clone()],
                    width,
                )?;
                let r = verify_invariance(sys, &cone, Direction::Forward, points, vectors_per_point, s)?;
                let passed = r.unstable();
                ConeConditionResult { condition: cond, reports: vec![r], passed }
            }
            ConeCondition::StrongStable => {
                let cone = ConeField::new(
                    std::slice::from_ref(&ax.ss),
                    &[ax.uu.clone(), ax.cu.clone(), ax.cs.clone()],
                    width,
                )?;
                let r = verify_invariance(sys, &cone, Direction::Backward, points, vectors_per_point, s)?;
                let passed = r.unstable();
                ConeConditionResult { condition: cond, reports: vec![r], passed }
            }
            ConeCondition::CenterPlane => {
                let plane = ConeField::new(&[ax.cu.clone(), ax.cs.clone()], &[], width)?;
                let f = verify_invariance(sys, &plane, Direction::Forward, points, vectors_per_point, s)?;
                let b = verify_invariance(sys, &plane, Direction::Backward, points, vectors_per_point, s ^ 1)?;
                let passed = f.violations == 0 && b.violations == 0;
                ConeConditionResult { condition: cond, reports: vec![f, b], passed }
            }
            ConeCondition::CenterUnstable => {
                let cone = ConeField::new(std::slice::from_ref(&ax.cu), std::slice::from_ref(&ax.cs), width)?;
                let r = verify_invariance(sys, &cone, Direction::Forward, points, vectors_per_point, s)?;
                let passed = r.invariant();
                ConeConditionResult { condition: cond, reports: vec![r], passed }
            }
            ConeCondition::CenterStable => {
                let cone = ConeField::new(std::slice::from_ref(&ax.cs), std::slice::from_ref(&ax.cu), width)?;
                let r = verify_invariance(sys, &cone, Direction::Backward, points, vectors_per_point, s)?;
                let passed = r.invariant();
                ConeConditionResult { condition: cond, reports: vec![r], passed }
            }
        };
        out.push(result);
    }
    Ok(out)
}

/// The four bundles at a point, in frame coordinates, with the angular
/// change between the last two pushes as a convergence residual.
#[derive(Clone, Debug)]
pub struct SplittingEstimate<T> {
    pub point: TorusPoint<T>,
    pub uu: DVector<T>,
    pub cu: DVector<T>,
    pub cs: DVector<T>,
    pub ss: DVector<T>,
    /// Residuals ordered `(uu, cu, cs, ss)`.
    pub residuals: [T; 4],
    pub converged: bool,
}

/// Projection onto `span(a, b)` (orthonormalized).
fn project_plane<T: Real>(v: &DVector<T>, a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
    let e1 = a.normalize();
    let b2 = b - &e1 * e1.dot(b);
    let e2 = b2.normalize();
    &e1 * e1.dot(v) + &e2 * e2.dot(v)
}

/// Estimates `F^uu, F^cu, F^cs, F^ss` at `x` by pushing the reference
/// axes forward from `f^{-n} x` (unstable ones) and backward from
/// `f^n x` (stable ones).
pub fn extract_splitting<T: Real, S: SplitSystem<T> + ?Sized>(
    sys: &S,
    x: &TorusPoint<T>,
    n_iter: usize,
    tol: T,
) -> Result<SplittingEstimate<T>> {
    if n_iter < 2 {
        return Err(Error::Precondition("splitting extraction needs at least two iterates".into()));
    }
    let ax = sys.bundle_axes();
    let mut back = Vec::with_capacity(n_iter + 1);
    back.push(x.clone());
    for j in 1..=n_iter {
        back.push(sys.apply_inverse(&back[j - 1])?);
    }
    let mut fwd = Vec::with_capacity(n_iter + 1);
    fwd.push(x.clone());
    for j in 1..=n_iter {
        fwd.push(sys.apply(&fwd[j - 1])?);
    }
    let push_forward = |axis: &DVector<T>, start: usize, in_plane: bool| -> Result<DVector<T>> {
        let mut v = axis.clone();
        for j in (1..=start).rev() {
            v = sys.jacobian(&back[j])? * v;
            if in_plane {
                v = project_plane(&v, &ax.cu, &ax.cs);
            }
            v.normalize_mut();
        }
        Ok(v)
    };
    let push_backward = |axis: &DVector<T>, start: usize, in_plane: bool| -> Result<DVector<T>> {
        let mut v = axis.clone();
        for j in (0..start).rev() {
            v = sys.jacobian_inverse_at_preimage(&fwd[j])? * v;
            if in_plane {
                v = project_plane(&v, &ax.cu, &ax.cs);
            }
            v.normalize_mut();
        }
        Ok(v)
    };
    let uu = push_forward(&ax.uu, n_iter, false)?;
    let uu_prev = push_forward(&ax.uu, n_iter - 1, false)?;
    let cu = push_forward(&ax.cu, n_iter, true)?;
    let cu_prev = push_forward(&ax.cu, n_iter - 1, true)?;
    let ss = push_backward(&ax.ss, n_iter, false)?;
    let ss_prev = push_backward(&ax.ss, n_iter - 1, false)?;
    let cs = push_backward(&ax.cs, n_iter, true)?;
    let cs_prev = push_backward(&ax.cs, n_iter - 1, true)?;
    let residuals = [
        line_separation(&uu, &uu_prev),
        line_separation(&cu, &cu_prev),
        line_separation(&cs, &cs_prev),
        line_separation(&ss, &ss_prev),
    ];
    let converged = residuals.iter().all(|&r| r < tol);
    Ok(SplittingEstimate { point: x.clone(), uu, cu, cs, ss, residuals, converged })
}

/// `F^uu(x)` for any [`StrongUnstable`] system, with its residual.
pub fn strong_unstable_direction<T: Real, S: StrongUnstable<T> + ?Sized>(
    sys: &S,
    x: &TorusPoint<T>,
    n_iter: usize,
) -> Result<(DVector<T>, T)> {
    if n_iter < 2 {
        return Err(Error::Precondition("need at least two iterates".into()));
    }
    let mut back = vec![x.clone()];
    for j in 1..=n_iter {
        back.push(sys.apply_inverse(&back[j - 1])?);
    }
    let axis = sys.strong_unstable_axis();
    let push = |start: usize| -> Result<DVector<T>> {
        let mut v = axis.clone();
        for j in (1..=start).rev() {
            v = sys.jacobian(&back[j])? * v;
            v.normalize_mut();
        }
        Ok(v)
    };
    let v = push(n_iter)?;
    let w = push(n_iter - 1)?;
    Ok((v.clone(), line_separation(&v, &w)))
}

/// Maximum of `theta` across a program run; `growth` minimum across the
/// expanding conditions.
pub fn program_summary<T: Real>(results: &[ConeConditionResult<T>]) -> (T, T, usize) {
    let theta =
        results.iter().filter(|r| r.condition != ConeCondition::CenterPlane).fold(T::zero(), |m, r| m.max(r.theta()));
    let growth = results
        .iter()
        .filter(|r| matches!(r.condition, ConeCondition::StrongUnstable | ConeCondition::StrongStable))
        .fold(T::max_value().unwrap(), |m, r| m.min(r.growth()));
    let violations = results.iter().map(|r| r.violations()).sum();
    (theta, growth, violations)
}

/// Unit coordinate vector `e_i` in dimension `d`.
pub fn axis<T: Real>(d: usize, i: usize) -> DVector<T> {
    DVector::from_fn(d, |j, _| if i == j { T::one() } else { T::zero() })
}

/// Fraction of `count` as `T`; convenience for reports.
pub fn fraction<T: Real>(num: usize, den: usize) -> T {
    from_usize::<T>(num) / from_usize::<T>(den.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::{compute_m, make_bump, BumpBoundSearch};
    use crate::deformation::search::{search_params, SearchCaps};
    use crate::deformation::{Chart, DeformedSystem};
    use crate::torus_linear::{IntegerMatrix, ToralAutomorphism};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn linear() -> ToralAutomorphism<f64> {
        let a = IntegerMatrix::cat().checked_pow(3).unwrap().direct_sum(&IntegerMatrix::cat());
        ToralAutomorphism::new(a).unwrap()
    }

    fn deformed() -> DeformedSystem<f64> {
        let b = make_bump(1.0f64 / 40.0).unwrap();
        let bound = compute_m(&b, &BumpBoundSearch::standard(&b)).unwrap();
        DeformedSystem::new(search_params(&bound, &SearchCaps::default()).unwrap().params).unwrap()
    }

    #[test]
    fn membership_basics() {
        let cone = ConeField::new(&[v(&[1.0, 0.0])], &[v(&[0.0, 1.0])], 0.1).unwrap();
        let inside = cone_contains(&cone, &v(&[1.0, 0.05])).unwrap();
        assert!(inside.inside && (inside.ratio - 0.05).abs() < 1e-15);
        let edge = cone_contains(&cone, &v(&[1.0, 0.1])).unwrap();
        assert!(edge.inside && edge.margin.abs() < 1e-15);
        let out = cone_contains(&cone, &v(&[0.0, 1.0])).unwrap();
        assert!(!out.inside);
        assert!(matches!(cone_contains(&cone, &v(&[0.0, 0.0])), Err(Error::Precondition(_))));
        assert!(cone_contains(&cone, &v(&[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn plane_cone_flags_vectors_off_the_plane() {
        let cone = ConeField::new(&[v(&[0.0, 0.0, 1.0, 0.0])], &[v(&[0.0, 0.0, 0.0, 1.0])], 0.1).unwrap();
        let m = cone_contains(&cone, &v(&[0.5, 0.0, 1.0, 0.0])).unwrap();
        assert!(!m.inside && m.off_subspace > 0.4);
    }

    #[test]
    fn linear_strong_unstable_cone_contracts_by_rate_ratio() {
        let a = linear();
        let ax = a.bundle_axes();
        let eps = 0.05;
        let cone =
            ConeField::new(std::slice::from_ref(&ax.uu), &[ax.cu.clone(), ax.cs.clone(), ax.ss.clone()], eps).unwrap();
        let pts = vec![TorusPoint::new(vec![0.1, 0.2, 0.3, 0.4])];
        let r = verify_invariance(&a, &cone, Direction::Forward, &pts, 64, 1).unwrap();
        let l = a.splitting().eigenvalues.clone();
        assert!((r.theta - l[1] / l[0]).abs() < 1e-12, "theta {}", r.theta);
        assert!(r.growth >= l[0] / (1.0 + eps * eps).sqrt() - 1e-12);
        assert!(r.unstable());
    }

    #[test]
    fn linear_program_passes() {
        let a = linear();
        let pts: Vec<_> = (0..20).map(|i| TorusPoint::new(vec![0.05 * i as f64, 0.3, 0.7, 0.01 * i as f64])).collect();
        let res = verify_cone_program(&a, 0.01, &pts, 8, 3).unwrap();
        assert!(res.iter().all(|r| r.passed));
    }

    #[test]
    fn deformed_program_passes_on_stress_points() {
        let sys = deformed();
        let eps0 = sys.params().eps0();
        let pts = sys.stress_points(900, 21);
        let res = verify_cone_program(&sys, eps0, &pts, 6, 4).unwrap();
        for r in &res {
            assert!(r.passed, "{:?} theta {} growth {}", r.condition, r.theta(), r.growth());
        }
        let (theta, growth, viol) = program_summary(&res);
        assert!(theta < 1.0 && growth > 1.0 && viol == 0);
    }

    #[test]
    fn wide_cone_around_the_wrong_axis_fails() {
        // A cone around E^s is not forward invariant for the linear map.
        let a = linear();
        let ax = a.bundle_axes();
        let cone = ConeField::new(std::slice::from_ref(&ax.cs), std::slice::from_ref(&ax.cu), 0.1).unwrap();
        let pts = vec![TorusPoint::new(vec![0.1, 0.2, 0.3, 0.4])];
        let r = verify_invariance(&a, &cone, Direction::Forward, &pts, 16, 1).unwrap();
        assert!(!r.invariant() && r.violations > 0 && r.witness.is_some());
    }

    #[test]
    fn linear_splitting_is_the_eigenbasis() {
        let a = linear();
        let est = extract_splitting(&a, &TorusPoint::new(vec![0.11, 0.5, 0.9, 0.3]), 40, 1e-10).unwrap();
        assert!(est.converged);
        let ax = a.bundle_axes();
        for (e, r) in [(&est.uu, &ax.uu), (&est.cu, &ax.cu), (&est.cs, &ax.cs), (&est.ss, &ax.ss)] {
            assert!(line_separation(e, r) < 1e-12);
        }
    }

    #[test]
    fn deformed_splitting_lies_in_cones_and_is_invariant() {
        let sys = deformed();
        let eps0 = sys.params().eps0();
        let ax = sys.bundle_axes();
        let mut pts = sys.stress_points(30, 8);
        pts.push(sys.fixed_point(Chart::P).clone());
        pts.push(sys.fixed_point(Chart::Q).clone());
        for x in pts {
            let est = extract_splitting(&sys, &x, 60, 1e-8).unwrap();
            assert!(est.converged, "{:?}", est.residuals);
            let uu_cone =
                ConeField::new(std::slice::from_ref(&ax.uu), &[ax.cu.clone(), ax.cs.clone(), ax.ss.clone()], eps0)
                    .unwrap();
            assert!(cone_contains(&uu_cone, &est.uu).unwrap().inside);
            // Df(x) F(x) = F(f x).
            let fx = sys.apply(&x).unwrap();
            let next = extract_splitting(&sys, &fx, 60, 1e-8).unwrap();
            let j = sys.jacobian(&x).unwrap();
            assert!(line_separation(&(&j * &est.uu), &next.uu) < 1e-8);
            assert!(line_separation(&(&j * &est.cu), &next.cu) < 1e-8);
            assert!(line_separation(&(&j * &est.cs), &next.cs) < 1e-8);
            assert!(line_separation(&(&j * &est.ss), &next.ss) < 1e-8);
        }
    }

    #[test]
    fn extraction_needs_two_iterates() {
        assert!(extract_splitting(&linear(), &TorusPoint::origin(4), 1, 1e-8).is_err());
    }

    proptest! {
        #[test]
        fn linear_images_stay_in_cone(x in proptest::collection::vec(0.0f64..1.0, 4), c in -1.0f64..1.0) {
            let a = linear();
            let ax = a.bundle_axes();
            let eps = 0.01;
            let cone = ConeField::new(std::slice::from_ref(&ax.cu), std::slice::from_ref(&ax.cs), eps).unwrap();
            let w = &ax.cu + &ax.cs * (eps * c);
            let img = a.jacobian(&TorusPoint::new(x)).unwrap() * w;
            let m = cone_contains(&cone, &img).unwrap();
            prop_assert!(m.inside);
            prop_assert!(m.ratio <= eps * a.splitting().eigenvalues[2] / a.splitting().eigenvalues[1] + 1e-15);
        }
    }
}
