//! The deformed automorphism `f = A o I` on `T^4`.
//!
//! `A = D^n x D^m` with `D = [[2, 1], [1, 1]]`. Near the fixed point `p`
//! (origin) the deformation `I` reshapes the weak-unstable coordinate so
//! that `Df_p` has a neutral (or, with `eps_tilde > 0`, contracting) center
//! direction; near a second fixed point `q` the weak-stable coordinate is
//! reshaped symmetrically. Away from the two charts `f = A`.
//!
//! Chart coordinates `(a, b, c, d)` are taken along the orthonormal
//! eigenbasis `(e_uu, e_ss, e_u, e_s)`.

pub mod search;

use crate::bump::{make_bump, SmoothBump};
use crate::cone::{axis, BundleAxes, SplitSystem};
use crate::error::{Error, Result};
use crate::map::{StrongUnstable, TorusMap};
use crate::numerics::rtsafe;
use crate::rng;
use crate::scalar::{from_usize, lit, Real};
use crate::torus::{wrap_centered, TorusPoint};
use crate::torus_linear::{eigen_split, enumerate_periodic_exact, IntegerMatrix};
use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rayon::prelude::*;

const ROOT_MAX_ITER: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeformationParams<T> {
    pub n: u32,
    pub m: u32,
    pub delta: T,
    pub k: T,
    pub eps1: T,
    pub eps_tilde: T,
}

impl<T: Real> DeformationParams<T> {
    /// Cone width `min(eps1 / 10, 0.05)`.
    pub fn eps0(&self) -> T {
        (self.eps1 / lit(10.0)).min(lit(0.05))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Chart {
    P,
    Q,
}

impl Chart {
    /// Index of the coordinate the deformation modifies.
    pub fn deformed_axis(self) -> usize {
        match self {
            Chart::P => 2,
            Chart::Q => 3,
        }
    }
}

/// Eigenvalues of `A`: `uu = lambda^n`, `ss = lambda^-n`, `u = lambda^m`,
/// `s = lambda^-m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates<T> {
    pub uu: T,
    pub ss: T,
    pub u: T,
    pub s: T,
}

/// Extremes of the Jacobian entries of `P` (or `Q`) over a point set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplittingBounds<T> {
    /// min / max of `dP/dc` (resp. `dQ/dd`).
    pub min_diag: T,
    pub max_diag: T,
    /// max of the three remaining partials in absolute value.
    pub max_small: T,
    pub points: usize,
}

#[derive(Clone, Debug)]
pub struct DeformedSystem<T: Real> {
    params: DeformationParams<T>,
    bump: SmoothBump<T>,
    rates: Rates<T>,
    matrix: IntegerMatrix,
    a: Matrix4<T>,
    a_inv: Matrix4<T>,
    frame: Matrix4<T>,
    p: TorusPoint<T>,
    q: TorusPoint<T>,
    kappa_p: T,
    kappa_q: T,
}

impl<T: Real> DeformedSystem<T> {
    pub fn new(params: DeformationParams<T>) -> Result<Self> {
        if params.n == 0 || params.m == 0 || params.n <= params.m {
            return Err(Error::Precondition(format!("need n > m >= 1, got n = {}, m = {}", params.n, params.m)));
        }
        if !(params.k > T::zero()) {
            return Err(Error::Precondition("k must be positive".into()));
        }
        if !(params.eps1 > T::zero() && params.eps1 < T::one()) {
            return Err(Error::Precondition("eps1 must lie in (0, 1)".into()));
        }
        if !(params.eps_tilde >= T::zero() && params.eps_tilde < T::one()) {
            return Err(Error::Precondition("eps_tilde must lie in [0, 1)".into()));
        }
        let bump = make_bump(params.delta)?;
        let dn = IntegerMatrix::cat().checked_pow(params.n)?;
        let dm = IntegerMatrix::cat().checked_pow(params.m)?;
        let matrix = dn.direct_sum(&dm);
        let inverse = matrix.inverse_unimodular()?;
        let sn = eigen_split::<T>(&dn)?;
        let sm = eigen_split::<T>(&dm)?;
        let rates = Rates { uu: sn.eigenvalues[0], ss: sn.eigenvalues[1], u: sm.eigenvalues[0], s: sm.eigenvalues[1] };
        let mut frame = Matrix4::zeros();
        for (col, (v, off)) in
            [(&sn.eigenvectors[0], 0), (&sn.eigenvectors[1], 0), (&sm.eigenvectors[0], 2), (&sm.eigenvectors[1], 2)]
                .into_iter()
                .enumerate()
        {
            frame[(off, col)] = v[0];
            frame[(off + 1, col)] = v[1];
        }
        let to4 = |m: &IntegerMatrix| Matrix4::from_fn(|i, j| lit::<T>(m.get(i, j) as f64));
        let one = T::one();
        let kappa_p = one - rates.u - params.eps_tilde;
        let kappa_q = one - one / rates.s - params.eps_tilde;
        let mut sys = Self {
            params,
            bump,
            rates,
            a: to4(&matrix),
            a_inv: to4(&inverse),
            matrix,
            frame,
            p: TorusPoint::origin(4),
            q: TorusPoint::origin(4),
            kappa_p,
            kappa_q,
        };
        sys.q = sys.choose_q(&dn)?;
        Ok(sys)
    }

    /// Same construction with a different `eps_tilde`.
    pub fn with_eps_tilde(&self, eps_tilde: T) -> Result<Self> {
        Self::new(DeformationParams { eps_tilde, ..self.params })
    }

    /// Picks `q = (x1, 0)` with `x1` a fixed point of `D^n`, maximizing the
    /// chart separation from `p`.
    fn choose_q(&self, dn: &IntegerMatrix) -> Result<TorusPoint<T>> {
        let lattice = enumerate_periodic_exact(dn, 1, 1 << 20)?;
        let mut best: Option<(T, TorusPoint<T>)> = None;
        for x1 in lattice.points::<T>() {
            if x1.coords().iter().all(|&c| c == T::zero()) {
                continue;
            }
            let cand = TorusPoint::new(vec![x1.coords()[0], x1.coords()[1], T::zero(), T::zero()]);
            let sep = self.chart_separation(&cand);
            if best.as_ref().is_none_or(|(s, _)| sep > *s) {
                best = Some((sep, cand));
            }
        }
        let need = self.params.delta * lit(6.0);
        match best {
            Some((sep, q)) if sep > need => Ok(q),
            Some((sep, _)) => Err(Error::Infeasible(format!(
                "best second fixed point has chart separation {sep}, need more than {need}"
            ))),
            None => Err(Error::Infeasible("D^n has no fixed point besides the origin".into())),
        }
    }

    /// Minimum over integer translates of the eigen-frame sup-norm of `q - p`.
    pub fn chart_separation(&self, q: &TorusPoint<T>) -> T {
        let base = Vector4::from_fn(|i, _| q.coords()[i] - self.p.coords()[i]);
        let mut best = T::max_value().unwrap();
        for code in 0..81usize {
            let mut z = base;
            let mut c = code;
            for i in 0..4 {
                z[i] += lit::<T>((c % 3) as f64 - 1.0);
                c /= 3;
            }
            let y = self.frame.transpose() * z;
            best = best.min(y.amax());
        }
        best
    }

    pub fn params(&self) -> &DeformationParams<T> {
        &self.params
    }

    pub fn bump(&self) -> &SmoothBump<T> {
        &self.bump
    }

    pub fn rates(&self) -> Rates<T> {
        self.rates
    }

    pub fn matrix(&self) -> &IntegerMatrix {
        &self.matrix
    }

    /// Orthonormal eigenframe; columns `(e_uu, e_ss, e_u, e_s)`.
    pub fn frame4(&self) -> &Matrix4<T> {
        &self.frame
    }

    pub fn fixed_point(&self, chart: Chart) -> &TorusPoint<T> {
        match chart {
            Chart::P => &self.p,
            Chart::Q => &self.q,
        }
    }

    /// Half-width `2 delta` of the deformation boxes.
    pub fn box_half_width(&self) -> T {
        self.params.delta * lit(2.0)
    }

    /// Half-width `delta / k` of the slab where the deformation is active in
    /// the deformed coordinate.
    pub fn slab_half_width(&self) -> T {
        self.params.delta / self.params.k
    }

    pub fn kappa(&self, chart: Chart) -> T {
        match chart {
            Chart::P => self.kappa_p,
            Chart::Q => self.kappa_q,
        }
    }

    pub fn chart_coords(&self, chart: Chart, x: &TorusPoint<T>) -> Vector4<T> {
        let c = self.fixed_point(chart).coords();
        let w = Vector4::from_fn(|i, _| wrap_centered(x.coords()[i] - c[i]));
        self.frame.transpose() * w
    }

    pub fn chart_point(&self, chart: Chart, y: &Vector4<T>) -> TorusPoint<T> {
        let w = self.frame * y;
        let c = self.fixed_point(chart).coords();
        TorusPoint::new((0..4).map(|i| c[i] + w[i]).collect())
    }

    fn in_box(&self, y: &Vector4<T>) -> bool {
        let h = self.box_half_width();
        y.iter().all(|v| v.abs() <= h)
    }

    /// The chart containing `x` together with its chart coordinates.
    pub fn locate(&self, x: &TorusPoint<T>) -> Option<(Chart, Vector4<T>)> {
        [Chart::P, Chart::Q].into_iter().find_map(|ch| {
            let y = self.chart_coords(ch, x);
            self.in_box(&y).then_some((ch, y))
        })
    }

    /// `P(a, b, c, d)`.
    pub fn p_value(&self, y: &Vector4<T>) -> T {
        let (a, b, c, d) = (y[0], y[1], y[2], y[3]);
        let r = (a * a + b * b + d * d).sqrt();
        self.bump.eval(self.params.k * c) * self.bump.eval(r) * self.kappa_p * c + self.rates.u * c
    }

    /// `Q(a, b, c, d)`.
    pub fn q_value(&self, y: &Vector4<T>) -> T {
        let (a, b, c, d) = (y[0], y[1], y[2], y[3]);
        let r = (a * a + b * b + c * c).sqrt();
        self.bump.eval(self.params.k * d) * self.bump.eval(r) * self.kappa_q * d + d / self.rates.s
    }

    /// Gradient of `P`, ordered `(a, b, c, d)`.
    pub fn p_partials(&self, y: &Vector4<T>) -> Vector4<T> {
        let (a, b, c, d) = (y[0], y[1], y[2], y[3]);
        let k = self.params.k;
        let r = (a * a + b * b + d * d).sqrt();
        let common = self.bump.eval(k * c) * c * self.kappa_p * self.bump.derivative(r);
        let radial = |v: T| if r > T::zero() { common * v / r } else { T::zero() };
        let pc = self.bump.eval(r) * self.kappa_p * self.bump.product_derivative(k * c) + self.rates.u;
        Vector4::new(radial(a), radial(b), pc, radial(d))
    }

    /// Gradient of `Q`, ordered `(a, b, c, d)`.
    pub fn q_partials(&self, y: &Vector4<T>) -> Vector4<T> {
        let (a, b, c, d) = (y[0], y[1], y[2], y[3]);
        let k = self.params.k;
        let r = (a * a + b * b + c * c).sqrt();
        let common = self.bump.eval(k * d) * d * self.kappa_q * self.bump.derivative(r);
        let radial = |v: T| if r > T::zero() { common * v / r } else { T::zero() };
        let qd = self.bump.eval(r) * self.kappa_q * self.bump.product_derivative(k * d) + T::one() / self.rates.s;
        Vector4::new(radial(a), radial(b), radial(c), qd)
    }

    /// Solves `g(t) = target` where `t -> t + amp * s(k t) t` is increasing
    /// and equals the identity outside the slab.
    fn solve_slab(&self, amp: T, target: T) -> Result<T> {
        let w = self.slab_half_width();
        if amp == T::zero() || target.abs() >= w {
            return Ok(target);
        }
        let k = self.params.k;
        let bump = &self.bump;
        let f = |t: T| {
            let v = t + amp * bump.eval(k * t) * t - target;
            let dv = T::one() + amp * bump.product_derivative(k * t);
            (v, dv)
        };
        let edge = w * (T::one() + lit(1e-6));
        rtsafe(f, -edge, edge, ROOT_MAX_ITER)
    }

    /// `t` with `P(a, b, t, d) / lambda_u = c`.
    pub fn solve_p_inverse(&self, y: &Vector4<T>) -> Result<T> {
        let r = (y[0] * y[0] + y[1] * y[1] + y[3] * y[3]).sqrt();
        let amp = self.bump.eval(r) * self.kappa_p / self.rates.u;
        self.solve_slab(amp, y[2])
    }

    /// `t` with `lambda_s Q(a, b, c, t) = d`.
    pub fn solve_q_forward(&self, y: &Vector4<T>) -> Result<T> {
        let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        let amp = self.bump.eval(r) * self.kappa_q * self.rates.s;
        self.solve_slab(amp, y[3])
    }

    /// Change of the deformed chart coordinate under the deformation.
    fn forward_shift(&self, x: &TorusPoint<T>) -> Result<Option<(Chart, T)>> {
        Ok(match self.locate(x) {
            Some((Chart::P, y)) => {
                let r = (y[0] * y[0] + y[1] * y[1] + y[3] * y[3]).sqrt();
                let c = y[2];
                let delta_c = self.bump.eval(self.params.k * c) * self.bump.eval(r) * self.kappa_p * c / self.rates.u;
                Some((Chart::P, delta_c))
            }
            Some((Chart::Q, y)) => Some((Chart::Q, self.solve_q_forward(&y)? - y[3])),
            None => None,
        })
    }

    fn inverse_shift(&self, x: &TorusPoint<T>) -> Result<Option<(Chart, T)>> {
        Ok(match self.locate(x) {
            Some((Chart::P, y)) => Some((Chart::P, self.solve_p_inverse(&y)? - y[2])),
            Some((Chart::Q, y)) => {
                let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
                let d = y[3];
                let delta_d = self.bump.eval(self.params.k * d) * self.bump.eval(r) * self.kappa_q * d * self.rates.s;
                Some((Chart::Q, delta_d))
            }
            None => None,
        })
    }

    fn shift_vector(&self, shift: Option<(Chart, T)>) -> Vector4<T> {
        match shift {
            Some((ch, amount)) => self.frame.column(ch.deformed_axis()) * amount,
            None => Vector4::zeros(),
        }
    }

    /// The deformation `I` alone.
    pub fn apply_deformation(&self, x: &TorusPoint<T>) -> Result<TorusPoint<T>> {
        let v = self.shift_vector(self.forward_shift(x)?);
        Ok(x.translate(&DVector::from_column_slice(v.as_slice())))
    }

    pub fn apply_deformation_inverse(&self, x: &TorusPoint<T>) -> Result<TorusPoint<T>> {
        let v = self.shift_vector(self.inverse_shift(x)?);
        Ok(x.translate(&DVector::from_column_slice(v.as_slice())))
    }

    /// `Df(x)` in the eigenframe.
    pub fn jacobian4(&self, x: &TorusPoint<T>) -> Result<Matrix4<T>> {
        let r = &self.rates;
        let mut j = Matrix4::from_diagonal(&Vector4::new(r.uu, r.ss, r.u, r.s));
        match self.locate(x) {
            Some((Chart::P, y)) => {
                let g = self.p_partials(&y);
                j.set_row(2, &g.transpose());
            }
            Some((Chart::Q, y)) => {
                let t = self.solve_q_forward(&y)?;
                let g = self.q_partials(&Vector4::new(y[0], y[1], y[2], t));
                let qd = g[3];
                let row = Vector4::new(-r.s * g[0] / qd, -r.s * g[1] / qd, -r.s * g[2] / qd, T::one() / qd);
                j.set_row(3, &row.transpose());
            }
            None => {}
        }
        Ok(j)
    }

    /// `Df(y)^{-1}`, exploiting that `Df` differs from a diagonal matrix in
    /// one row only.
    pub fn jacobian_inverse4_at_preimage(&self, y: &TorusPoint<T>) -> Result<Matrix4<T>> {
        let j = self.jacobian4(y)?;
        let row = self.locate(y).map(|(ch, _)| ch.deformed_axis());
        Ok(invert_single_row(&j, row))
    }

    /// Extremes of the partials of `P` (chart `P`) or `Q` (chart `Q`).
    pub fn splitting_bounds(&self, chart: Chart, points: &[Vector4<T>]) -> SplittingBounds<T> {
        let axis = chart.deformed_axis();
        let init = || (T::max_value().unwrap(), T::min_value().unwrap(), T::zero());
        let (min_diag, max_diag, max_small) = points
            .par_iter()
            .map(|y| {
                let g = match chart {
                    Chart::P => self.p_partials(y),
                    Chart::Q => self.q_partials(y),
                };
                let small = (0..4).filter(|&i| i != axis).fold(T::zero(), |m, i| m.max(g[i].abs()));
                (g[axis], g[axis], small)
            })
            .reduce(init, |a, b| (a.0.min(b.0), a.1.max(b.1), a.2.max(b.2)));
        SplittingBounds { min_diag, max_diag, max_small, points: points.len() }
    }

    /// Tensor grid with `nodes` points per axis on `[-2 delta, 2 delta]^4`.
    pub fn uniform_chart_grid(&self, nodes: usize) -> Vec<Vector4<T>> {
        let h = self.box_half_width();
        tensor_grid([h; 4], nodes)
    }

    /// Tensor grid on the box with the deformed axis restricted to
    /// `[-2 delta / k, 2 delta / k]`, resolving the thin slab where the
    /// deformation varies fastest.
    pub fn slab_grid(&self, chart: Chart, nodes: usize) -> Vec<Vector4<T>> {
        let h = self.box_half_width();
        let mut half = [h; 4];
        half[chart.deformed_axis()] = (self.slab_half_width() * lit(2.0)).min(h);
        tensor_grid(half, nodes)
    }

    /// Random chart coordinates: a fraction uniform over the box, the rest
    /// inside the slab.
    pub fn random_chart_points(&self, chart: Chart, n: usize, slab_fraction: f64, seed: u64) -> Vec<Vector4<T>> {
        let mut r = rng::stream(seed, 0);
        let h = self.box_half_width();
        let w = (self.slab_half_width() * lit(1.5)).min(h);
        let n_slab = (n as f64 * slab_fraction).round() as usize;
        (0..n)
            .map(|i| {
                let mut y = Vector4::from_fn(|_, _| rng::uniform(&mut r, -h, h));
                if i < n_slab {
                    y[chart.deformed_axis()] = rng::uniform(&mut r, -w, w);
                }
                y
            })
            .collect()
    }

    /// Mixture of uniform torus points and slab points near `p` and `q`.
    pub fn stress_points(&self, n: usize, seed: u64) -> Vec<TorusPoint<T>> {
        let third = n / 3;
        let mut r = rng::stream(seed, 0);
        let mut out: Vec<TorusPoint<T>> = (0..n - 2 * third)
            .map(|_| TorusPoint::new((0..4).map(|_| rng::uniform(&mut r, T::zero(), T::one())).collect()))
            .collect();
        for (ch, s) in [(Chart::P, 1u64), (Chart::Q, 2u64)] {
            let ys = self.random_chart_points(ch, third, 1.0, seed.wrapping_add(s));
            out.extend(ys.iter().map(|y| self.chart_point(ch, y)));
        }
        out
    }
}

/// Inverse of a matrix that is diagonal except for row `row`.
pub fn invert_single_row<T: Real>(j: &Matrix4<T>, row: Option<usize>) -> Matrix4<T> {
    let mut inv = Matrix4::from_diagonal(&Vector4::from_fn(|i, _| T::one() / j[(i, i)]));
    if let Some(k) = row {
        let rk = j[(k, k)];
        for c in (0..4).filter(|&c| c != k) {
            inv[(k, c)] = -j[(k, c)] / (rk * j[(c, c)]);
        }
    }
    inv
}

fn tensor_grid<T: Real>(half: [T; 4], nodes: usize) -> Vec<Vector4<T>> {
    let axis = |h: T| -> Vec<T> {
        if nodes == 1 {
            return vec![T::zero()];
        }
        (0..nodes).map(|i| -h + (h + h) * from_usize::<T>(i) / from_usize::<T>(nodes - 1)).collect()
    };
    let ax: Vec<Vec<T>> = half.iter().map(|&h| axis(h)).collect();
    let mut out = Vec::with_capacity(nodes.pow(4));
    for &a in &ax[0] {
        for &b in &ax[1] {
            for &c in &ax[2] {
                for &d in &ax[3] {
                    out.push(Vector4::new(a, b, c, d));
                }
            }
        }
    }
    out
}

fn to_dmatrix<T: Real>(m: &Matrix4<T>) -> DMatrix<T> {
    DMatrix::from_column_slice(4, 4, m.as_slice())
}

impl<T: Real> TorusMap<T> for DeformedSystem<T> {
    fn dim(&self) -> usize {
        4
    }

    fn apply_lift(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let shift = self.shift_vector(self.forward_shift(&TorusPoint::from_vector(x))?);
        let v = Vector4::from_fn(|i, _| x[i] + shift[i]);
        Ok(DVector::from_column_slice((self.a * v).as_slice()))
    }

    fn apply_inverse_lift(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let y = self.a_inv * Vector4::from_fn(|i, _| x[i]);
        let yv = DVector::from_column_slice(y.as_slice());
        let shift = self.shift_vector(self.inverse_shift(&TorusPoint::from_vector(&yv))?);
        Ok(DVector::from_column_slice((y + shift).as_slice()))
    }

    fn jacobian(&self, x: &TorusPoint<T>) -> Result<DMatrix<T>> {
        Ok(to_dmatrix(&self.jacobian4(x)?))
    }

    fn jacobian_inverse_at_preimage(&self, y: &TorusPoint<T>) -> Result<DMatrix<T>> {
        Ok(to_dmatrix(&self.jacobian_inverse4_at_preimage(y)?))
    }

    fn frame(&self) -> DMatrix<T> {
        to_dmatrix(&self.frame)
    }
}

impl<T: Real> StrongUnstable<T> for DeformedSystem<T> {
    fn strong_unstable_axis(&self) -> DVector<T> {
        DVector::from_column_slice(&[T::one(), T::zero(), T::zero(), T::zero()])
    }
}

impl<T: Real> SplitSystem<T> for DeformedSystem<T> {
    fn bundle_axes(&self) -> BundleAxes<T> {
        BundleAxes { uu: axis(4, 0), cu: axis(4, 2), cs: axis(4, 3), ss: axis(4, 1) }
    }
}
