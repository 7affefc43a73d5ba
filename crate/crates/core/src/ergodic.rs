//! Lyapunov exponents, bundle exponents, Birkhoff averages, Pesin-block
//! membership and the unstable volume-growth identity.

use crate::cone::{extract_splitting, SplitSystem};
use crate::error::{Error, Result};
use crate::map::{StrongUnstable, TorusMap};
use crate::numerics::{gram_schmidt, operator_norm_2col};
use crate::rng;
use crate::scalar::{from_usize, lit, to_f64, CompensatedSum, Real};
use crate::torus::TorusPoint;
use nalgebra::{DMatrix, DVector};

/// Iterations used to converge the splitting at orbit endpoints.
pub const SPLITTING_ITERATES: usize = 60;
const SPLITTING_TOL: f64 = 1e-8;
const BATCHES: usize = 40;
const HISTORY_POINTS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct OrbitSpec<T> {
    pub start: TorusPoint<T>,
    /// Total number of steps, burn-in included.
    pub length: usize,
    /// Steps discarded before averaging.
    pub transient: usize,
    pub seed: u64,
}

impl<T: Real> OrbitSpec<T> {
    pub fn new(start: TorusPoint<T>, length: usize, transient: usize, seed: u64) -> Result<Self> {
        if length <= transient {
            return Err(Error::Precondition(format!("orbit length {length} must exceed the transient {transient}")));
        }
        Ok(Self { start, length, transient, seed })
    }

    fn averaged_steps(&self) -> usize {
        self.length - self.transient
    }
}

/// `count` orbits with Lebesgue-uniform starts, stream `i` of `seed` for
/// orbit `i`.
pub fn random_orbits<T: Real>(
    dim: usize,
    count: usize,
    length: usize,
    transient: usize,
    seed: u64,
) -> Result<Vec<OrbitSpec<T>>> {
    (0..count)
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let start = TorusPoint::new((0..dim).map(|_| rng::uniform(&mut r, T::zero(), T::one())).collect());
            OrbitSpec::new(start, length, transient, seed.wrapping_add(i as u64))
        })
        .collect()
}

/// Last-quarter versus full-run comparison with a batch-means error bar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceFlag<T> {
    pub full_mean: T,
    pub tail_mean: T,
    /// Batch-means standard error of the tail mean.
    pub standard_error: T,
    pub converged: bool,
}

/// Mean and convergence flag of a per-step series.
pub fn summarize<T: Real>(values: &[T]) -> ConvergenceFlag<T> {
    let n = values.len();
    let mut full = CompensatedSum::new();
    values.iter().for_each(|&v| full.add(v));
    let full_mean = full.value() / from_usize::<T>(n.max(1));
    let tail_start = n - n / 4;
    let mut tail = CompensatedSum::new();
    values[tail_start..].iter().for_each(|&v| tail.add(v));
    let tail_mean = tail.value() / from_usize::<T>((n - tail_start).max(1));
    let batches = BATCHES.min(n).max(1);
    let len = n / batches;
    let means: Vec<T> = (0..batches)
        .map(|b| {
            let mut s = CompensatedSum::new();
            let end = if b + 1 == batches { n } else { (b + 1) * len };
            values[b * len..end].iter().for_each(|&v| s.add(v));
            s.value() / from_usize::<T>((end - b * len).max(1))
        })
        .collect();
    let bm = means.iter().fold(T::zero(), |a, &m| a + m) / from_usize::<T>(batches);
    let var = means.iter().fold(T::zero(), |a, &m| a + (m - bm) * (m - bm))
        / from_usize::<T>(batches.saturating_sub(1).max(1));
    // The tail covers a quarter of the batches.
    let standard_error = (var * lit(4.0) / from_usize::<T>(batches)).sqrt();
    let floor = lit::<T>(1e-12) * full_mean.abs().max(T::one());
    let converged = (tail_mean - full_mean).abs() < lit::<T>(3.0) * standard_error + floor;
    ConvergenceFlag { full_mean, tail_mean, standard_error, converged }
}

fn running_history<T: Real>(series: &[Vec<T>]) -> Vec<(usize, Vec<T>)> {
    let n = series.first().map_or(0, |s| s.len());
    if n == 0 {
        return Vec::new();
    }
    let stride = (n / HISTORY_POINTS).max(1);
    let mut sums: Vec<CompensatedSum<T>> = vec![CompensatedSum::new(); series.len()];
    let mut out = Vec::new();
    for i in 0..n {
        for (s, col) in sums.iter_mut().zip(series) {
            s.add(col[i]);
        }
        if (i + 1) % stride == 0 || i + 1 == n {
            let k = from_usize::<T>(i + 1);
            out.push((i + 1, sums.iter().map(|s| s.value() / k).collect()));
        }
    }
    out
}

fn check_finite<T: Real>(v: T, step: usize) -> Result<()> {
    if to_f64(v).is_finite() {
        Ok(())
    } else {
        Err(Error::OrbitDiverged { step, reason: "non-finite log-growth".into() })
    }
}

#[derive(Clone, Debug)]
pub struct LyapunovSpectrum<T> {
    /// Sorted in decreasing order.
    pub exponents: Vec<T>,
    pub flags: Vec<ConvergenceFlag<T>>,
    /// Birkhoff average of `log |det Df|` over the same steps.
    pub log_det_average: T,
    /// `(step, running estimates)` after the transient.
    pub history: Vec<(usize, Vec<T>)>,
}

impl<T: Real> LyapunovSpectrum<T> {
    pub fn sum(&self) -> T {
        self.exponents.iter().fold(T::zero(), |a, &b| a + b)
    }

    pub fn converged(&self) -> bool {
        self.flags.iter().all(|f| f.converged)
    }
}

/// Benettin QR method starting from the identity frame.
pub fn lyapunov_spectrum<T: Real, S: TorusMap<T> + ?Sized>(
    sys: &S,
    orbit: &OrbitSpec<T>,
) -> Result<LyapunovSpectrum<T>> {
    lyapunov_spectrum_with_frame(sys, orbit, &DMatrix::identity(sys.dim(), sys.dim()))
}

/// Benettin QR method from a given orthonormal initial frame; the frame is
/// re-orthonormalized after every step and burned in with the orbit.
pub fn lyapunov_spectrum_with_frame<T: Real, S: TorusMap<T> + ?Sized>(
    sys: &S,
    orbit: &OrbitSpec<T>,
    frame: &DMatrix<T>,
) -> Result<LyapunovSpectrum<T>> {
    let d = sys.dim();
    if frame.nrows() != d || frame.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: frame.nrows() });
    }
    if orbit.start.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: orbit.start.dim() });
    }
    let steps = orbit.averaged_steps();
    let mut series: Vec<Vec<T>> = vec![Vec::with_capacity(steps); d];
    let mut log_det = Vec::with_capacity(steps);
    let mut q = frame.clone();
    let mut x = orbit.start.clone();
    for step in 0..orbit.length {
        let j = sys.jacobian(&x)?;
        let mut z = &j * &q;
        let diag = gram_schmidt(&mut z);
        q = z;
        if step >= orbit.transient {
            for (col, r) in series.iter_mut().zip(&diag) {
                let l = r.ln();
                check_finite(l, step)?;
                col.push(l);
            }
            log_det.push(j.determinant().abs().ln());
        }
        x = sys.apply(&x)?;
    }
    let flags: Vec<ConvergenceFlag<T>> = series.iter().map(|s| summarize(s)).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| flags[b].full_mean.partial_cmp(&flags[a].full_mean).unwrap());
    let history =
        running_history(&series).into_iter().map(|(s, v)| (s, order.iter().map(|&i| v[i]).collect())).collect();
    Ok(LyapunovSpectrum {
        exponents: order.iter().map(|&i| flags[i].full_mean).collect(),
        flags: order.iter().map(|&i| flags[i]).collect(),
        log_det_average: summarize(&log_det).full_mean,
        history,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Bundle {
    Uu,
    Cu,
    Cs,
    Ss,
    /// The two-dimensional sum `F^cs + F^ss`; its exponent is estimated
    /// by the mean log operator norm, an upper bound for the top exponent.
    CsSs,
}

#[derive(Clone, Debug)]
pub struct BundleExponent<T> {
    pub bundle: Bundle,
    pub value: T,
    pub flag: ConvergenceFlag<T>,
    /// `false` when the splitting at the orbit endpoint did not converge;
    /// the value is then a partial result.
    pub splitting_converged: bool,
    pub history: Vec<(usize, T)>,
}

fn project_plane<T: Real>(v: &DVector<T>, a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
    a * a.dot(v) + b * b.dot(v)
}

/// Average one-step log-growth along a transported bundle.
pub fn bundle_exponent<T: Real, S: SplitSystem<T> + ?Sized>(
    sys: &S,
    orbit: &OrbitSpec<T>,
    bundle: Bundle,
) -> Result<BundleExponent<T>> {
    let n = orbit.length;
    let mut pts = Vec::with_capacity(n + 1);
    pts.push(orbit.start.clone());
    for i in 0..n {
        let next = sys.apply(&pts[i])?;
        pts.push(next);
    }
    let ax = sys.bundle_axes();
    let tol = lit::<T>(SPLITTING_TOL);
    let mut growth = vec![T::zero(); n];
    let converged;
    match bundle {
        Bundle::Uu | Bundle::Cu => {
            let est = extract_splitting(sys, &pts[0], SPLITTING_ITERATES, tol)?;
            converged = est.converged;
            let mut v = if bundle == Bundle::Uu { est.uu } else { est.cu };
            for i in 0..n {
                let mut w = sys.jacobian(&pts[i])? * &v;
                if bundle == Bundle::Cu {
                    w = project_plane(&w, &ax.cu, &ax.cs);
                }
                let g = w.norm();
                growth[i] = g.ln();
                check_finite(growth[i], i)?;
                v = w / g;
            }
        }
        Bundle::Cs | Bundle::Ss => {
            let est = extract_splitting(sys, &pts[n], SPLITTING_ITERATES, tol)?;
            converged = est.converged;
            let mut v = if bundle == Bundle::Ss { est.ss } else { est.cs };
            for i in (0..n).rev() {
                let mut w = sys.jacobian_inverse_at_preimage(&pts[i])? * &v;
                if bundle == Bundle::Cs {
                    w = project_plane(&w, &ax.cu, &ax.cs);
                }
                let g = w.norm();
                growth[i] = -g.ln();
                check_finite(growth[i], i)?;
                v = w / g;
            }
        }
        Bundle::CsSs => {
            let est = extract_splitting(sys, &pts[n], SPLITTING_ITERATES, tol)?;
            converged = est.converged;
            let mut frame = DMatrix::from_columns(&[est.cs, est.ss]);
            for i in (0..n).rev() {
                let mut w = sys.jacobian_inverse_at_preimage(&pts[i])? * &frame;
                gram_schmidt(&mut w);
                frame = w;
                let img = sys.jacobian(&pts[i])? * &frame;
                growth[i] = operator_norm_2col(&img).ln();
                check_finite(growth[i], i)?;
            }
        }
    }
    let tail = &growth[orbit.transient..];
    let flag = summarize(tail);
    let history = running_history(&[tail.to_vec()]).into_iter().map(|(s, v)| (s, v[0])).collect();
    Ok(BundleExponent { bundle, value: flag.full_mean, flag, splitting_converged: converged, history })
}

#[derive(Clone, Debug)]
pub struct BirkhoffAverage<T> {
    pub value: T,
    pub flag: ConvergenceFlag<T>,
    pub history: Vec<(usize, T)>,
}

/// Time average of `observable` along the orbit after the transient.
pub fn birkhoff_average<T: Real, S: TorusMap<T> + ?Sized>(
    sys: &S,
    orbit: &OrbitSpec<T>,
    observable: &(dyn Fn(&TorusPoint<T>) -> T + Sync),
) -> Result<BirkhoffAverage<T>> {
    let mut x = orbit.start.clone();
    let mut vals = Vec::with_capacity(orbit.averaged_steps());
    for step in 0..orbit.length {
        if step >= orbit.transient {
            vals.push(observable(&x));
        }
        x = sys.apply(&x)?;
    }
    let flag = summarize(&vals);
    let history = running_history(&[vals]).into_iter().map(|(s, v)| (s, v[0])).collect();
    Ok(BirkhoffAverage { value: flag.full_mean, flag, history })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PesinBlockQuery<T> {
    pub alpha: T,
    pub l: usize,
    pub horizon: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PesinSide {
    /// Backward contraction along `E = F^uu + F^cu`.
    Unstable,
    /// Forward contraction along `F = F^cs + F^ss`.
    Stable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PesinMembership<T> {
    pub member: bool,
    /// First `n` (1-based) where an inequality fails.
    pub first_failure: Option<(usize, PesinSide)>,
    /// Partial sums `sum_{i<n} log |Df^{-l}|_E|` for `n = 1..=horizon`.
    pub unstable_sums: Vec<T>,
    /// Partial sums `sum_{i<n} log |Df^l|_F|`.
    pub stable_sums: Vec<T>,
}

/// Finite-horizon test of both product inequalities defining the Pesin
/// block `Lambda(alpha, l, E, F)`.
pub fn pesin_block_membership<T: Real, S: SplitSystem<T> + ?Sized>(
    sys: &S,
    x: &TorusPoint<T>,
    q: &PesinBlockQuery<T>,
) -> Result<PesinMembership<T>> {
    if !(q.alpha > T::zero()) {
        return Err(Error::Precondition("alpha must be positive".into()));
    }
    if q.l == 0 || q.horizon == 0 {
        return Err(Error::Precondition("l and horizon must be positive".into()));
    }
    let ax = sys.bundle_axes();
    let span = q.horizon * q.l;
    let total = span + SPLITTING_ITERATES;

    // F-planes along the forward orbit by backward transport from the end.
    let mut fwd = vec![x.clone()];
    for j in 0..total {
        let next = sys.apply(&fwd[j])?;
        fwd.push(next);
    }
    let mut f_planes = vec![DMatrix::zeros(0, 0); span + 1];
    let mut frame = DMatrix::from_columns(&[ax.cs.clone(), ax.ss.clone()]);
    for j in (0..total).rev() {
        let mut w = sys.jacobian_inverse_at_preimage(&fwd[j])? * &frame;
        gram_schmidt(&mut w);
        frame = w;
        if j <= span {
            f_planes[j] = frame.clone();
        }
    }
    // E-planes along the backward orbit by forward transport from the far past.
    let mut back = vec![x.clone()];
    for j in 0..total {
        let prev = sys.apply_inverse(&back[j])?;
        back.push(prev);
    }
    let mut e_planes = vec![DMatrix::zeros(0, 0); span + 1];
    let mut frame = DMatrix::from_columns(&[ax.uu.clone(), ax.cu.clone()]);
    for j in (1..=total).rev() {
        let mut w = sys.jacobian(&back[j])? * &frame;
        gram_schmidt(&mut w);
        frame = w;
        if j - 1 <= span {
            e_planes[j - 1] = frame.clone();
        }
    }

    let tol = lit::<T>(1e-12);
    let mut stable_sums = Vec::with_capacity(q.horizon);
    let mut unstable_sums = Vec::with_capacity(q.horizon);
    let mut s_acc = CompensatedSum::new();
    let mut u_acc = CompensatedSum::new();
    let mut first_failure = None;
    for i in 0..q.horizon {
        let mut m = f_planes[i * q.l].clone();
        for y in &fwd[i * q.l..(i + 1) * q.l] {
            m = sys.jacobian(y)? * m;
        }
        s_acc.add(operator_norm_2col(&m).ln());
        let mut m = e_planes[i * q.l].clone();
        for j in i * q.l..(i + 1) * q.l {
            // Df^{-1} at back[j] is Df(back[j + 1])^{-1}.
            m = sys.jacobian_inverse_at_preimage(&back[j + 1])? * m;
        }
        u_acc.add(operator_norm_2col(&m).ln());
        let n = i + 1;
        let bound = -q.alpha * from_usize::<T>(n * q.l);
        let slack = tol * from_usize::<T>(n * q.l);
        stable_sums.push(s_acc.value());
        unstable_sums.push(u_acc.value());
        if first_failure.is_none() {
            if u_acc.value() > bound + slack {
                first_failure = Some((n, PesinSide::Unstable));
            } else if s_acc.value() > bound + slack {
                first_failure = Some((n, PesinSide::Stable));
            }
        }
    }
    Ok(PesinMembership { member: first_failure.is_none(), first_failure, unstable_sums, stable_sums })
}

/// A map whose strong-unstable axis is the unstable direction of a linear
/// base factor, with the component along that axis multiplied by the base
/// rate at every step.
pub trait SkewOverLinear<T: Real>: StrongUnstable<T> {
    /// Unstable eigenvalue modulus of the linear base.
    fn base_unstable_rate(&self) -> T;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyVolume<T> {
    pub estimate: T,
    pub log_base_rate: T,
    pub gap: T,
    pub flag: ConvergenceFlag<T>,
}

/// Birkhoff estimate of `log |det Df|_{E^u}|` obtained by transporting
/// `bundle` (frame coordinates) along the orbit, compared with the log of
/// the base unstable rate.
pub fn entropy_volume_identity<T: Real, S: SkewOverLinear<T> + ?Sized>(
    sys: &S,
    orbit: &OrbitSpec<T>,
    bundle: &DVector<T>,
) -> Result<EntropyVolume<T>> {
    let axis = sys.strong_unstable_axis();
    if bundle.len() != axis.len() {
        return Err(Error::DimensionMismatch { expected: axis.len(), found: bundle.len() });
    }
    if bundle.dot(&axis).abs() <= lit::<T>(1e-12) * bundle.norm() {
        return Err(Error::Precondition("tested bundle has no component along the base unstable direction".into()));
    }
    let mut v = bundle.normalize();
    let mut x = orbit.start.clone();
    let mut vals = Vec::with_capacity(orbit.averaged_steps());
    for step in 0..orbit.length {
        let w = sys.jacobian(&x)? * &v;
        let g = w.norm();
        if step >= orbit.transient {
            let l = g.ln();
            check_finite(l, step)?;
            vals.push(l);
        }
        v = w / g;
        x = sys.apply(&x)?;
    }
    let flag = summarize(&vals);
    let log_base_rate = sys.base_unstable_rate().ln();
    Ok(EntropyVolume { estimate: flag.full_mean, log_base_rate, gap: (flag.full_mean - log_base_rate).abs(), flag })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sandwich<T> {
    /// `|A^n v^u|`.
    pub lower: T,
    /// `|Df^n v|`.
    pub value: T,
    /// `sqrt(alpha^2 + 1) |A^n v^u|`.
    pub upper: T,
}

impl<T: Real> Sandwich<T> {
    pub fn holds(&self, rel_tol: T) -> bool {
        self.lower * (T::one() - rel_tol) <= self.value && self.value <= self.upper * (T::one() + rel_tol)
    }
}

/// Growth of a vector of the cone `|v - v^u| <= alpha |v^u|` (with `v^u`
/// its component along the base unstable axis) against the base growth.
pub fn growth_sandwich_check<T: Real, S: SkewOverLinear<T> + ?Sized>(
    sys: &S,
    x: &TorusPoint<T>,
    v: &DVector<T>,
    n: usize,
    alpha: T,
) -> Result<Sandwich<T>> {
    let axis = sys.strong_unstable_axis();
    if v.len() != axis.len() {
        return Err(Error::DimensionMismatch { expected: axis.len(), found: v.len() });
    }
    let vu = &axis * axis.dot(v);
    let nu = vu.norm();
    if nu == T::zero() || (v - &vu).norm() > alpha * nu * (T::one() + lit(1e-12)) {
        return Err(Error::Precondition(format!(
            "vector is not in the width-{alpha} cone around the base unstable direction"
        )));
    }
    let mut w = v.clone();
    let mut y = x.clone();
    for _ in 0..n {
        w = sys.jacobian(&y)? * w;
        y = sys.apply(&y)?;
    }
    let lower = nu * sys.base_unstable_rate().powi(n as i32);
    Ok(Sandwich { lower, value: w.norm(), upper: (alpha * alpha + T::one()).sqrt() * lower })
}

impl<T: Real> SkewOverLinear<T> for crate::torus_linear::ToralAutomorphism<T> {
    fn base_unstable_rate(&self) -> T {
        self.unstable_rate()
    }
}

/// The deformed map acts on the first two coordinates as `D^n`.
impl<T: Real> SkewOverLinear<T> for crate::deformation::DeformedSystem<T> {
    fn base_unstable_rate(&self) -> T {
        self.rates().uu
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::{compute_m, make_bump, BumpBoundSearch};
    use crate::cone::axis;
    use crate::deformation::search::{search_params, SearchCaps};
    use crate::deformation::{Chart, DeformedSystem};
    use crate::torus_linear::{IntegerMatrix, ToralAutomorphism};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn linear() -> ToralAutomorphism<f64> {
        let a = IntegerMatrix::cat().checked_pow(3).unwrap().direct_sum(&IntegerMatrix::cat());
        ToralAutomorphism::new(a).unwrap()
    }

    fn deformed() -> DeformedSystem<f64> {
        static P: OnceLock<crate::deformation::DeformationParams<f64>> = OnceLock::new();
        let p = P.get_or_init(|| {
            let b = make_bump(1.0f64 / 40.0).unwrap();
            let bound = compute_m(&b, &BumpBoundSearch::standard(&b)).unwrap();
            search_params(&bound, &SearchCaps::default()).unwrap().params
        });
        DeformedSystem::new(*p).unwrap()
    }

    fn logs() -> [f64; 4] {
        let l = (3.0 + 5f64.sqrt()) / 2.0;
        [3.0 * l.ln(), l.ln(), -l.ln(), -3.0 * l.ln()]
    }

    fn orbit(start: TorusPoint<f64>, length: usize) -> OrbitSpec<f64> {
        OrbitSpec::new(start, length, 200, 0).unwrap()
    }

    #[test]
    fn linear_spectrum_is_exact() {
        let a = linear();
        let s = lyapunov_spectrum(&a, &orbit(TorusPoint::new(vec![0.1, 0.2, 0.3, 0.4]), 5000)).unwrap();
        for (e, l) in s.exponents.iter().zip(logs()) {
            assert!((e - l).abs() < 1e-10, "{e} vs {l}");
        }
        assert!(s.sum().abs() < 1e-10);
        assert!(s.converged());
    }

    #[test]
    fn fixed_point_spectra() {
        let sys = deformed();
        let l = logs();
        let p = sys.fixed_point(Chart::P).clone();
        let s = lyapunov_spectrum(&sys, &orbit(p.clone(), 3000)).unwrap();
        let expect = [l[0], 0.0, l[2], l[3]];
        for (e, x) in s.exponents.iter().zip(expect) {
            assert!((e - x).abs() < 1e-10, "{:?}", s.exponents);
        }
        let tilde = sys.with_eps_tilde(0.1).unwrap();
        let s = lyapunov_spectrum(&tilde, &orbit(p, 3000)).unwrap();
        let expect = [l[0], 0.9f64.ln(), l[2], l[3]];
        for (e, x) in s.exponents.iter().zip(expect) {
            assert!((e - x).abs() < 1e-10, "{:?}", s.exponents);
        }
        let q = sys.fixed_point(Chart::Q).clone();
        let s = lyapunov_spectrum(&tilde, &orbit(q, 3000)).unwrap();
        let expect = [l[0], l[1], -(0.9f64.ln()), l[3]];
        for (e, x) in s.exponents.iter().zip(expect) {
            assert!((e - x).abs() < 1e-10, "{:?}", s.exponents);
        }
    }

    #[test]
    fn spectrum_sum_matches_log_det_and_is_frame_independent() {
        let sys = deformed();
        let o = &random_orbits::<f64>(4, 1, 20_000, 500, 17).unwrap()[0];
        let s1 = lyapunov_spectrum(&sys, o).unwrap();
        assert!((s1.sum() - s1.log_det_average).abs() < 1e-8);
        let mut r = rng::stream(99, 0);
        let mut m = DMatrix::from_fn(4, 4, |_, _| rng::normal::<f64, _>(&mut r));
        gram_schmidt(&mut m);
        let s2 = lyapunov_spectrum_with_frame(&sys, o, &m).unwrap();
        for (a, b) in s1.exponents.iter().zip(&s2.exponents) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn bundle_exponents_on_linear_map() {
        let a = linear();
        let o = orbit(TorusPoint::new(vec![0.3, 0.1, 0.4, 0.15]), 2000);
        let l = logs();
        for (b, x) in
            [(Bundle::Uu, l[0]), (Bundle::Cu, l[1]), (Bundle::Cs, l[2]), (Bundle::Ss, l[3]), (Bundle::CsSs, l[2])]
        {
            let e = bundle_exponent(&a, &o, b).unwrap();
            assert!(e.splitting_converged);
            assert!((e.value - x).abs() < 1e-10, "{b:?}: {} vs {x}", e.value);
        }
    }

    #[test]
    fn bundle_exponents_on_deformed_orbit() {
        let sys = deformed();
        let o = &random_orbits::<f64>(4, 1, 10_000, 200, 5).unwrap()[0];
        let cu = bundle_exponent(&sys, o, Bundle::Cu).unwrap();
        let center = bundle_exponent(&sys, o, Bundle::CsSs).unwrap();
        assert!(cu.value > 0.0 && center.value < 0.0);
        assert!(cu.flag.converged && center.flag.converged);
        let uu = bundle_exponent(&sys, o, Bundle::Uu).unwrap();
        let cs = bundle_exponent(&sys, o, Bundle::Cs).unwrap();
        let ss = bundle_exponent(&sys, o, Bundle::Ss).unwrap();
        let spec = lyapunov_spectrum(&sys, o).unwrap();
        assert!((uu.value + cu.value + cs.value + ss.value - spec.sum()).abs() < 1e-2);
    }

    #[test]
    fn birkhoff_of_constant_is_exact() {
        let sys = deformed();
        let o = &random_orbits::<f64>(4, 1, 1000, 10, 1).unwrap()[0];
        let b = birkhoff_average(&sys, o, &|_| 1.0).unwrap();
        assert_eq!(b.value, 1.0);
        assert!(b.flag.converged);
    }

    #[test]
    fn drifting_series_is_flagged() {
        let v: Vec<f64> = (0..4000).map(|i| i as f64 * 1e-3).collect();
        assert!(!summarize(&v).converged);
        let c = vec![0.5f64; 4000];
        assert!(summarize(&c).converged);
    }

    #[test]
    fn pesin_blocks() {
        let a = linear();
        let x = TorusPoint::new(vec![0.2, 0.7, 0.1, 0.9]);
        let q = PesinBlockQuery { alpha: 0.9, l: 2, horizon: 20 };
        assert!(pesin_block_membership(&a, &x, &q).unwrap().member);
        let too_big = PesinBlockQuery { alpha: 1.0, ..q };
        let r = pesin_block_membership(&a, &x, &too_big).unwrap();
        assert_eq!(r.first_failure, Some((1, PesinSide::Unstable)));

        let sys = deformed();
        let r = pesin_block_membership(
            &sys,
            sys.fixed_point(Chart::P),
            &PesinBlockQuery { alpha: 0.05, l: 1, horizon: 10 },
        )
        .unwrap();
        assert!(!r.member);
        assert_eq!(r.first_failure.unwrap().1, PesinSide::Unstable);
        assert!(matches!(
            pesin_block_membership(&a, &x, &PesinBlockQuery { alpha: 0.0, ..q }),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn entropy_identity() {
        let a = linear();
        let o = orbit(TorusPoint::new(vec![0.2, 0.4, 0.6, 0.8]), 3000);
        let r = entropy_volume_identity(&a, &o, &a.strong_unstable_axis()).unwrap();
        assert!(r.gap < 1e-10);
        let sys = deformed();
        let o = &random_orbits::<f64>(4, 1, 20_000, 100, 3).unwrap()[0];
        let r = entropy_volume_identity(&sys, o, &axis(4, 0)).unwrap();
        assert!(r.gap < 0.01);
        assert!(matches!(entropy_volume_identity(&sys, o, &axis(4, 2)), Err(Error::Precondition(_))));
    }

    #[test]
    fn sandwich_on_linear_map_is_closed_form() {
        let a = linear();
        let ax = a.bundle_axes();
        let v = &ax.uu + &ax.cu * 0.03 + &ax.ss * 0.04;
        let n = 12;
        let s = growth_sandwich_check(&a, &TorusPoint::origin(4), &v, n, 0.05).unwrap();
        let e = a.splitting().eigenvalues.clone();
        let exact =
            (e[0].powi(2 * n as i32) + (0.03 * e[1].powi(n as i32)).powi(2) + (0.04 * e[3].powi(n as i32)).powi(2))
                .sqrt();
        assert!((s.value - exact).abs() / exact < 1e-12);
        assert!(s.holds(1e-12));
    }

    #[test]
    fn sandwich_on_deformed_map() {
        let sys = deformed();
        for x in sys.stress_points(30, 4) {
            let v = axis::<f64>(4, 0) + axis::<f64>(4, 2) * 0.005 - axis::<f64>(4, 3) * 0.005;
            for n in [1, 10, 30] {
                let s = growth_sandwich_check(&sys, &x, &v, n, 0.01).unwrap();
                assert!(s.holds(1e-12), "{s:?}");
            }
        }
        let fiber = axis::<f64>(4, 2);
        assert!(growth_sandwich_check(&sys, &TorusPoint::origin(4), &fiber, 3, 0.01).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn pesin_membership_is_monotone_in_alpha(
            xs in proptest::collection::vec(0.0f64..1.0, 4), alpha in 0.01f64..1.2, shrink in 0.0f64..1.0
        ) {
            let a = linear();
            let x = TorusPoint::new(xs);
            let q = PesinBlockQuery { alpha, l: 1, horizon: 8 };
            let smaller = PesinBlockQuery { alpha: alpha * shrink.max(1e-3), ..q };
            if pesin_block_membership(&a, &x, &q).unwrap().member {
                prop_assert!(pesin_block_membership(&a, &x, &smaller).unwrap().member);
            }
        }
    }
}
