//! Products `g = f_base x T` of a low-dimensional base system with a toral
//! automorphism fiber, and the projections `pi12` (to the base), `pi2` (to
//! the fiber) and `pi` (to the linear Anosov factor of the base).

use crate::ergodic::SkewOverLinear;
use crate::error::{Error, Result};
use crate::gibbs::EmpiricalMeasure;
use crate::map::{StrongUnstable, TorusMap};
use crate::numerics::rtsafe;
use crate::rng;
use crate::scalar::{lit, to_f64, Real};
use crate::torus::TorusPoint;
use crate::torus_linear::ToralAutomorphism;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub const MAX_BASE_DIM: usize = 3;
pub const MAX_TOTAL_DIM: usize = 6;
/// Safety factor applied to every sampled rate comparison.
pub const DOMINATION_MARGIN: f64 = 1.1;
/// Grid nodes per base axis for the domination pre-check.
pub const DOMINATION_GRID: usize = 64;

/// A base system factoring over a linear Anosov map of `T^2`, with a constant
/// invariant strong-unstable line and an invariant complement `E^cs`.
pub trait BaseSystem<T: Real>: StrongUnstable<T> {
    fn id(&self) -> String;
    fn anosov(&self) -> &ToralAutomorphism<T>;
    /// Orthonormal basis (frame coordinates) of the invariant complement of
    /// the strong-unstable line.
    fn center_stable_basis(&self) -> DMatrix<T>;
    /// Semiconjugacy to the Anosov factor.
    fn to_anosov(&self, x: &TorusPoint<T>) -> TorusPoint<T>;
}

fn two_dim_anosov<T: Real>(a: &ToralAutomorphism<T>) -> Result<()> {
    if a.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: a.dim() });
    }
    Ok(())
}

/// The linear map itself, used as a base.
#[derive(Clone, Debug)]
pub struct LinearBase<T: Real> {
    map: ToralAutomorphism<T>,
}

impl<T: Real> LinearBase<T> {
    pub fn new(map: ToralAutomorphism<T>) -> Result<Self> {
        two_dim_anosov(&map)?;
        Ok(Self { map })
    }
}

impl<T: Real> TorusMap<T> for LinearBase<T> {
    fn dim(&self) -> usize {
        2
    }
    fn apply_lift(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.map.apply_lift(x)
    }
    fn apply_inverse_lift(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.map.apply_inverse_lift(x)
    }
    fn jacobian(&self, x: &TorusPoint<T>) -> Result<DMatrix<T>> {
        self.map.jacobian(x)
    }
    fn jacobian_inverse_at_preimage(&self, y: &TorusPoint<T>) -> Result<DMatrix<T>> {
        self.map.jacobian_inverse_at_preimage(y)
    }
}

impl<T: Real> StrongUnstable<T> for LinearBase<T> {
    fn strong_unstable_axis(&self) -> DVector<T> {
        self.map.strong_unstable_axis()
    }
}

impl<T: Real> BaseSystem<T> for LinearBase<T> {
    fn id(&self) -> String {
        let r = self.map.matrix().rows();
        format!("linear[{},{};{},{}]", r[0][0], r[0][1], r[1][0], r[1][1])
    }
    fn anosov(&self) -> &ToralAutomorphism<T> {
        &self.map
    }
    fn center_stable_basis(&self) -> DMatrix<T> {
        let s = self.map.splitting().eigenvectors[1].normalize();
        DMatrix::from_columns(&[s])
    }
    fn to_anosov(&self, x: &TorusPoint<T>) -> TorusPoint<T> {
        x.clone()
    }
}

/// `(x, theta) -> (A x, theta + eps/(2 pi l) sin(2 pi l theta))` on
/// `T^2 x S^1`: the circle map has `l` attracting fixed points at
/// `theta = (2i + 1)/(2l)` with multiplier `1 - eps`, and `l` repelling ones
/// at `i/l` with multiplier `1 + eps`.
#[derive(Clone, Debug)]
pub struct AttractingCircleBase<T: Real> {
    map: ToralAutomorphism<T>,
    attractors: usize,
    eps: T,
}

impl<T: Real> AttractingCircleBase<T> {
    pub fn new(map: ToralAutomorphism<T>, attractors: usize, eps: T) -> Result<Self> {
        two_dim_anosov(&map)?;
        if attractors == 0 {
            return Err(Error::Precondition("need at least one attractor".into()));
        }
        if !(eps > T::zero() && eps < T::one()) {
            return Err(Error::Precondition("circle strength must lie in (0, 1)".into()));
        }
        Ok(Self { map, attractors, eps })
    }

    pub fn attractors(&self) -> usize {
        self.attractors
    }

    /// The attracting circle fixed points.
    pub fn attracting_angles(&self) -> Vec<T> {
        let l = self.attractors as f64;
        (0..self.attractors).map(|i| lit((2.0 * i as f64 + 1.0) / (2.0 * l))).collect()
    }

    fn circle(&self, th: T) -> (T, T) {
        let w = T::two_pi() * lit(self.attractors as f64);
        (th + self.eps / w * (w * th).sin(), T::one() + self.eps * (w * th).cos())
    }

    fn circle_inverse(&self, y: T) -> Result<T> {
        let w = T::two_pi() * lit(self.attractors as f64);
        let a = self.eps / w * lit(1.0 + 1e-9);
        rtsafe(
            |t| {
                let (v, d) = self.circle(t);
                (v - y, d)
            },
            y - a,
            y + a,
            200,
        )
    }
}

impl<T: Real> TorusMap<T> for AttractingCircleBase<T> {
    fn dim(&self) -> usize {
        3
    }
    fn apply_lift(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let xy = self.map.apply_lift(&x.rows(0, 2).into_owned())?;
        Ok(DVector::from_vec(vec![xy[0], xy[1], self.circle(x[2]).0]))
    }
    fn apply_inverse_lift(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let xy = self.map.apply_inverse_lift(&x.rows(0, 2).into_owned())?;
        Ok(DVector::from_vec(vec![xy[0], xy[1], self.circle_inverse(x[2])?]))
    }
    fn jacobian(&self, x: &TorusPoint<T>) -> Result<DMatrix<T>> {
        let a = self.map.float_matrix();
        let mut j = DMatrix::zeros(3, 3);
        j.view_mut((0, 0), (2, 2)).copy_from(a);
        j[(2, 2)] = self.circle(x.coords()[2]).1;
        Ok(j)
    }
}

impl<T: Real> StrongUnstable<T> for AttractingCircleBase<T> {
    fn strong_unstable_axis(&self) -> DVector<T> {
        let u = self.map.strong_unstable_axis();
        DVector::from_vec(vec![u[0], u[1], T::zero()])
    }
}

impl<T: Real> BaseSystem<T> for AttractingCircleBase<T> {
    fn id(&self) -> String {
        format!("circle[l={},eps={}]", self.attractors, to_f64(self.eps))
    }
    fn anosov(&self) -> &ToralAutomorphism<T> {
        &self.map
    }
    fn center_stable_basis(&self) -> DMatrix<T> {
        let s = self.map.splitting().eigenvectors[1].normalize();
        DMatrix::from_columns(&[
            DVector::from_vec(vec![s[0], s[1], T::zero()]),
            DVector::from_vec(vec![T::zero(), T::zero(), T::one()]),
        ])
    }
    fn to_anosov(&self, x: &TorusPoint<T>) -> TorusPoint<T> {
        TorusPoint::from_slice(&x.coords()[..2])
    }
}

/// Sampled rates behind the domination pre-check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DominationReport<T> {
    /// `min |Df e^uu|` over the grid.
    pub uu_min: T,
    /// `max |Df|_{E^cs}|` over the grid.
    pub cs_max: T,
    pub fiber_unstable_min: T,
    pub fiber_unstable_max: T,
    pub fiber_stable_max: T,
    pub samples: usize,
}

impl<T: Real> DominationReport<T> {
    /// `E^uu` outgrows the fiber's unstable directions.
    pub fn strong_unstable_dominates(&self) -> bool {
        self.uu_min >= self.fiber_unstable_max * lit(DOMINATION_MARGIN)
    }

    /// The fiber's unstable directions outgrow `E^s_T + E^cs`.
    pub fn fiber_unstable_dominates(&self) -> bool {
        self.fiber_unstable_min >= self.cs_max.max(self.fiber_stable_max) * lit(DOMINATION_MARGIN)
    }

    pub fn passed(&self) -> bool {
        self.strong_unstable_dominates() && self.fiber_unstable_dominates()
    }
}

/// `g(x, y) = (f(x), T y)`. A coupling hook exists only to test that the
/// diagram checks detect a broken product structure.
pub struct ProductSystem<T: Real> {
    base: Box<dyn BaseSystem<T>>,
    fiber: ToralAutomorphism<T>,
    domination: DominationReport<T>,
    coupling: T,
}

impl<T: Real> std::fmt::Debug for ProductSystem<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProductSystem")
            .field("base", &self.base.id())
            .field("fiber", self.fiber.matrix())
            .field("coupling", &to_f64(self.coupling))
            .finish()
    }
}

fn domination_report<T: Real>(base: &dyn BaseSystem<T>, fiber: &ToralAutomorphism<T>) -> Result<DominationReport<T>> {
    let db = base.dim();
    let n = DOMINATION_GRID;
    let total = n.pow(db as u32);
    let uu = base.strong_unstable_axis();
    let cs = base.center_stable_basis();
    let rates: Vec<(T, T)> = (0..total)
        .into_par_iter()
        .map(|mut code| {
            let coords: Vec<T> = (0..db)
                .map(|_| {
                    let c = code % n;
                    code /= n;
                    lit((c as f64 + 0.5) / n as f64)
                })
                .collect();
            let j = base.jacobian(&TorusPoint::new(coords))?;
            let g = (&j * &uu).norm();
            let s = (&j * &cs).singular_values().max();
            Ok((g, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let uu_min = rates.iter().fold(T::max_value().unwrap(), |m, r| m.min(r.0));
    let cs_max = rates.iter().fold(T::zero(), |m, r| m.max(r.1));
    let one = T::one();
    let moduli: Vec<T> = fiber.splitting().eigenvalues.iter().map(|l| l.abs()).collect();
    let unstable: Vec<T> = moduli.iter().copied().filter(|&m| m > one).collect();
    let stable: Vec<T> = moduli.iter().copied().filter(|&m| m < one).collect();
    Ok(DominationReport {
        uu_min,
        cs_max,
        fiber_unstable_min: unstable.iter().fold(T::max_value().unwrap(), |m, &x| m.min(x)),
        fiber_unstable_max: unstable.iter().fold(T::zero(), |m, &x| m.max(x)),
        fiber_stable_max: stable.iter().fold(T::zero(), |m, &x| m.max(x)),
        samples: total,
    })
}

/// Assembles `base x fiber` after a sampled domination check of the
/// splitting `E^uu + E^u_T + (E^s_T + E^cs)`.
pub fn build_product<T: Real>(base: Box<dyn BaseSystem<T>>, fiber: ToralAutomorphism<T>) -> Result<ProductSystem<T>> {
    let db = base.dim();
    if db > MAX_BASE_DIM {
        return Err(Error::Precondition(format!(
            "base dimension {db} exceeds {MAX_BASE_DIM}; higher-dimensional systems are not built as products"
        )));
    }
    if db + fiber.dim() > MAX_TOTAL_DIM {
        return Err(Error::Precondition(format!("total dimension {} exceeds {MAX_TOTAL_DIM}", db + fiber.dim())));
    }
    let rep = domination_report(base.as_ref(), &fiber)?;
    if !rep.strong_unstable_dominates() {
        return Err(Error::IncompatibleFiber(format!(
            "min |Df e^uu| = {} < {DOMINATION_MARGIN} x max fiber unstable modulus {}",
            to_f64(rep.uu_min),
            to_f64(rep.fiber_unstable_max)
        )));
    }
    if !rep.fiber_unstable_dominates() {
        return Err(Error::IncompatibleFiber(format!(
            "min fiber unstable modulus {} < {DOMINATION_MARGIN} x max(|Df|E^cs| = {}, fiber stable modulus {})",
            to_f64(rep.fiber_unstable_min),
            to_f64(rep.cs_max),
            to_f64(rep.fiber_stable_max)
        )));
    }
    Ok(ProductSystem { base, fiber, domination: rep, coupling: T::zero() })
}

impl<T: Real> ProductSystem<T> {
    pub fn base(&self) -> &dyn BaseSystem<T> {
        self.base.as_ref()
    }

    pub fn fiber(&self) -> &ToralAutomorphism<T> {
        &self.fiber
    }

    pub fn base_dim(&self) -> usize {
        self.base.dim()
    }

    pub fn domination(&self) -> &DominationReport<T> {
        &self.domination
    }

    /// Test hook: adds `strength * sin(2 pi x_0)` to the first fiber
    /// coordinate, which breaks `pi2 o g = T o pi2`.
    pub fn with_coupling(mut self, strength: T) -> Self {
        self.coupling = strength;
        self
    }

    pub fn pi12(&self, z: &TorusPoint<T>) -> TorusPoint<T> {
        TorusPoint::from_slice(&z.coords()[..self.base_dim()])
    }

    pub fn pi2(&self, z: &TorusPoint<T>) -> TorusPoint<T> {
        TorusPoint::from_slice(&z.coords()[self.base_dim()..])
    }

    /// Projection to the Anosov factor of the base.
    pub fn pi(&self, z: &TorusPoint<T>) -> TorusPoint<T> {
        self.base.to_anosov(&self.pi12(z))
    }

    pub fn join(&self, x: &TorusPoint<T>, y: &TorusPoint<T>) -> TorusPoint<T> {
        TorusPoint::new(x.coords().iter().chain(y.coords()).copied().collect())
    }

    fn coupling_term(&self, x0: T) -> T {
        self.coupling * (T::two_pi() * x0).sin()
    }
}

impl<T: Real> TorusMap<T> for ProductSystem<T> {
    fn dim(&self) -> usize {
        self.base.dim() + self.fiber.dim()
    }

    fn apply_lift(&self, z: &DVector<T>) -> Result<DVector<T>> {
        let db = self.base_dim();
        let x = self.base.apply_lift(&z.rows(0, db).into_owned())?;
        let mut y = self.fiber.apply_lift(&z.rows(db, self.fiber.dim()).into_owned())?;
        y[0] += self.coupling_term(z[0]);
        Ok(DVector::from_iterator(self.dim(), x.iter().chain(y.iter()).copied()))
    }

    fn apply_inverse_lift(&self, z: &DVector<T>) -> Result<DVector<T>> {
        let db = self.base_dim();
        let x = self.base.apply_inverse_lift(&z.rows(0, db).into_owned())?;
        let mut yz = z.rows(db, self.fiber.dim()).into_owned();
        yz[0] -= self.coupling_term(x[0]);
        let y = self.fiber.apply_inverse_lift(&yz)?;
        Ok(DVector::from_iterator(self.dim(), x.iter().chain(y.iter()).copied()))
    }

    fn jacobian(&self, z: &TorusPoint<T>) -> Result<DMatrix<T>> {
        let db = self.base_dim();
        let d = self.dim();
        let jb = self.base.jacobian(&self.pi12(z))?;
        let mut j = DMatrix::zeros(d, d);
        j.view_mut((0, 0), (db, db)).copy_from(&jb);
        j.view_mut((db, db), (d - db, d - db)).copy_from(self.fiber.float_matrix());
        if self.coupling != T::zero() {
            let rb = self.base.frame();
            let c = self.coupling * T::two_pi() * (T::two_pi() * z.coords()[0]).cos();
            for col in 0..db {
                j[(db, col)] = c * rb[(0, col)];
            }
        }
        Ok(j)
    }

    fn frame(&self) -> DMatrix<T> {
        let db = self.base_dim();
        let d = self.dim();
        let mut r = DMatrix::identity(d, d);
        r.view_mut((0, 0), (db, db)).copy_from(&self.base.frame());
        r
    }
}

impl<T: Real> StrongUnstable<T> for ProductSystem<T> {
    fn strong_unstable_axis(&self) -> DVector<T> {
        let u = self.base.strong_unstable_axis();
        DVector::from_iterator(self.dim(), u.iter().copied().chain(std::iter::repeat_n(T::zero(), self.fiber.dim())))
    }
}

impl<T: Real> SkewOverLinear<T> for ProductSystem<T> {
    fn base_unstable_rate(&self) -> T {
        self.base.anosov().unstable_rate()
    }
}

/// Maximal torus-distance residuals of the three commuting diagrams.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagramResiduals<T> {
    /// `|pi12(g z) - f(pi12 z)|`.
    pub base: T,
    /// `|pi2(g z) - T(pi2 z)|`.
    pub fiber: T,
    /// `|pi(g z) - A(pi z)|`.
    pub anosov: T,
    pub samples: usize,
}

pub fn commuting_diagram_check<T: Real>(
    ps: &ProductSystem<T>,
    n_points: usize,
    seed: u64,
) -> Result<DiagramResiduals<T>> {
    let d = ps.dim();
    let rows: Vec<(T, T, T)> = (0..n_points)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let z = TorusPoint::new((0..d).map(|_| rng::uniform(&mut r, T::zero(), T::one())).collect());
            let gz = ps.apply(&z)?;
            let base = ps.pi12(&gz).distance(&ps.base.apply(&ps.pi12(&z))?);
            let fiber = ps.pi2(&gz).distance(&ps.fiber.apply(&ps.pi2(&z))?);
            let anosov = ps.pi(&gz).distance(&ps.base.anosov().apply(&ps.pi(&z))?);
            Ok((base, fiber, anosov))
        })
        .collect::<Result<Vec<_>>>()?;
    let max = |f: fn(&(T, T, T)) -> T| rows.iter().map(f).fold(T::zero(), |m, x| m.max(x));
    Ok(DiagramResiduals { base: max(|r| r.0), fiber: max(|r| r.1), anosov: max(|r| r.2), samples: n_points })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiberMarginals<T> {
    pub base: EmpiricalMeasure<T>,
    pub fiber: EmpiricalMeasure<T>,
}

/// Splits a measure on the product grid into its base and fiber marginals.
pub fn fiber_pushforward_statistics<T: Real>(
    ps: &ProductSystem<T>,
    measure: &EmpiricalMeasure<T>,
) -> Result<FiberMarginals<T>> {
    if measure.bins().len() != ps.dim() {
        return Err(Error::GridMismatch(format!(
            "{}-dimensional grid for a {}-dimensional product",
            measure.bins().len(),
            ps.dim()
        )));
    }
    Ok(FiberMarginals { base: measure.marginal(ps.base_dim())?, fiber: measure.trailing_marginal(ps.base_dim())? })
}
