//! The smooth even bump `s` and the constant `M` that controls its
//! derivative.
//!
//! `s(x) = sigma((delta - |x|) / (delta / 2))` with the C-infinity step
//! `sigma(t) = 1 / (1 + exp(1/t - 1/(1-t)))` on `(0, 1)`, `0` below, `1`
//! above. Hence `s = 1` on `[-delta/2, delta/2]`, `s = 0` off `(-delta, delta)`,
//! and `s` is monotone on each half-line.

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

/// Smooth step on `(0, 1)`, exact 0 / 1 outside.
pub fn smooth_step<T: Real>(t: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    if t >= T::one() {
        return T::one();
    }
    let z = T::one() / t - T::one() / (T::one() - t);
    T::one() / (T::one() + z.exp())
}

/// Derivative of [`smooth_step`].
pub fn smooth_step_derivative<T: Real>(t: T) -> T {
    if t <= T::zero() || t >= T::one() {
        return T::zero();
    }
    let one = T::one();
    // sigma(t) (1 - sigma(t)) = sigma(t) sigma(1 - t), computed without
    // cancellation.
    let w = smooth_step(t) * smooth_step(one - t);
    w * (one / (t * t) + one / ((one - t) * (one - t)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothBump<T> {
    delta: T,
}

/// Builds the bump with plateau half-width `delta / 2` and support
/// half-width `delta`. Requires `0 < delta` and `16 delta^2 <= 1/100`.
pub fn make_bump<T: Real>(delta: T) -> Result<SmoothBump<T>> {
    if !(delta > T::zero()) {
        return Err(Error::MeasureConstraint(format!("delta must be positive, got {delta}")));
    }
    let lhs = lit::<T>(16.0) * delta * delta;
    if lhs > lit::<T>(0.01) * (T::one() + T::default_epsilon() * lit(8.0)) {
        return Err(Error::MeasureConstraint(format!("16 delta^2 = {lhs} exceeds 1/100 (delta = {delta} > 1/40)")));
    }
    Ok(SmoothBump { delta })
}

impl<T: Real> SmoothBump<T> {
    pub fn delta(&self) -> T {
        self.delta
    }

    #[inline]
    fn t_of(&self, x: T) -> T {
        (self.delta - x.abs()) / (self.delta * lit(0.5))
    }

    /// `s(x)`.
    pub fn eval(&self, x: T) -> T {
        smooth_step(self.t_of(x))
    }

    /// `1 - s(x)`, accurate near the plateau.
    pub fn complement(&self, x: T) -> T {
        smooth_step(T::one() - self.t_of(x))
    }

    /// `s'(x)`.
    pub fn derivative(&self, x: T) -> T {
        let d = smooth_step_derivative(self.t_of(x)) * lit(2.0) / self.delta;
        if x > T::zero() {
            -d
        } else if x < T::zero() {
            d
        } else {
            T::zero()
        }
    }

    /// `g(y) = s(y) + y s'(y)`, the derivative of `y -> y s(y)`.
    pub fn product_derivative(&self, y: T) -> T {
        self.eval(y) + y * self.derivative(y)
    }

    /// `sup_y |y s(y)|`.
    pub fn sup_y_s(&self) -> T {
        golden_max(|y| y * self.eval(y), self.delta * lit(0.5), self.delta, 200)
    }

    /// `sup |s'|` (attained where the step has slope `2 / delta`).
    pub fn sup_derivative(&self) -> T {
        golden_max(|y| -self.derivative(y), self.delta * lit(0.5), self.delta, 200)
    }
}

/// Rectangle and resolution for [`compute_m`].
#[derive(Clone, Copy, Debug)]
pub struct BumpBoundSearch<T> {
    pub x_range: (T, T),
    pub y_range: (T, T),
    /// Grid nodes per axis.
    pub nodes: usize,
}

impl<T: Real> BumpBoundSearch<T> {
    /// The quarter square `[0, delta]^2`.
    pub fn standard(bump: &SmoothBump<T>) -> Self {
        Self { x_range: (T::zero(), bump.delta()), y_range: (T::zero(), bump.delta()), nodes: 2001 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpBound<T> {
    /// `M = max(0, -min s(x) (s(y) + y s'(y)))`.
    pub m: T,
    pub argmin: (T, T),
}

fn golden_max<T: Real>(f: impl Fn(T) -> T, lo: T, hi: T, iters: usize) -> T {
    -golden_min(|x| -f(x), lo, hi, iters).1
}

/// Golden-section minimization; returns `(argmin, min)`.
fn golden_min<T: Real>(f: impl Fn(T) -> T, lo: T, hi: T, iters: usize) -> (T, T) {
    let r: T = (lit::<T>(5.0).sqrt() - T::one()) * lit(0.5);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if b - a <= T::default_epsilon() * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = (a + b) * lit(0.5);
    let fx = f(x);
    [(c, fc), (d, fd), (x, fx)].into_iter().fold((x, fx), |best, cand| if cand.1 < best.1 { cand } else { best })
}

/// Numerically maximizes `-s(x) (s(y) + y s'(y))` over the search
/// rectangle: a tensor grid followed by golden-section refinement around
/// the best node.
pub fn compute_m<T: Real>(bump: &SmoothBump<T>, search: &BumpBoundSearch<T>) -> Result<BumpBound<T>> {
    if search.nodes < 2 {
        return Err(Error::Precondition("grid needs at least two nodes per axis".into()));
    }
    let axis = |(lo, hi): (T, T)| -> Vec<T> {
        (0..search.nodes).map(|i| lo + (hi - lo) * from_usize::<T>(i) / from_usize::<T>(search.nodes - 1)).collect()
    };
    let xs = axis(search.x_range);
    let ys = axis(search.y_range);
    let sx: Vec<T> = xs.iter().map(|&x| bump.eval(x)).collect();
    let gy: Vec<T> = ys.iter().map(|&y| bump.product_derivative(y)).collect();
    let mut best = (T::zero(), 0usize, 0usize);
    for (i, &a) in sx.iter().enumerate() {
        for (j, &b) in gy.iter().enumerate() {
            let v = a * b;
            if v < best.0 {
                best = (v, i, j);
            }
        }
    }
    if best.0 >= T::zero() {
        return Ok(BumpBound { m: T::zero(), argmin: (xs[0], ys[0]) });
    }
    let hx = (search.x_range.1 - search.x_range.0) / from_usize::<T>(search.nodes - 1);
    let hy = (search.y_range.1 - search.y_range.0) / from_usize::<T>(search.nodes - 1);
    let clamp = |v: T, (lo, hi): (T, T)| v.max(lo).min(hi);
    let (mut x, mut y) = (xs[best.1], ys[best.2]);
    let mut val = best.0;
    for _ in 0..3 {
        let (ny, fy) = golden_min(
            |t| bump.eval(x) * bump.product_derivative(t),
            clamp(y - hy, search.y_range),
            clamp(y + hy, search.y_range),
            200,
        );
        if fy <= val {
            y = ny;
            val = fy;
        }
        let (nx, fx) = golden_min(
            |t| bump.eval(t) * bump.product_derivative(y),
            clamp(x - hx, search.x_range),
            clamp(x + hx, search.x_range),
            200,
        );
        if fx <= val {
            x = nx;
            val = fx;
        }
    }
    Ok(BumpBound { m: -val, argmin: (x, y) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent derivative oracle: central difference in the step
    /// variable, evaluated through the complement near the plateau.
    fn fd_derivative(b: &SmoothBump<f64>, x: f64) -> f64 {
        let delta = b.delta();
        let t = (delta - x.abs()) / (delta / 2.0);
        let h = 1e-3 * t.min(1.0 - t).powi(2);
        let ds = if t > 0.5 {
            // derivative of 1 - sigma(1 - t) in t equals sigma'(1 - t)
            let c = |u: f64| smooth_step(1.0 - u);
            -(c(t + h) - c(t - h)) / (2.0 * h)
        } else {
            (smooth_step(t + h) - smooth_step(t - h)) / (2.0 * h)
        };
        -x.signum() * ds * 2.0 / delta
    }

    #[test]
    fn bump_shape() {
        let b = make_bump(1.0f64 / 40.0).unwrap();
        let d = b.delta();
        assert_eq!(b.eval(0.0), 1.0);
        assert_eq!(b.eval(d / 2.0), 1.0);
        assert_eq!(b.eval(-d / 2.0), 1.0);
        assert_eq!(b.eval(d), 0.0);
        assert_eq!(b.eval(-1.3 * d), 0.0);
        assert_eq!(b.derivative(0.0), 0.0);
        assert!((b.eval(0.75 * d) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_oracle() {
        let b = make_bump(1.0f64 / 40.0).unwrap();
        let d = b.delta();
        let mut worst: f64 = 0.0;
        for i in 1..2000 {
            let x = d * (0.5 + 0.5 * i as f64 / 2000.0);
            for xx in [x, -x] {
                let exact = b.derivative(xx);
                let approx = fd_derivative(&b, xx);
                let err = (exact - approx).abs() / exact.abs().max(1e-300);
                if exact.abs() > 1e-200 {
                    worst = worst.max(err);
                }
            }
        }
        assert!(worst < 1e-6, "worst relative error {worst}");
    }

    #[test]
    fn rejects_large_delta() {
        assert!(matches!(make_bump(0.03f64), Err(Error::MeasureConstraint(_))));
        assert!(matches!(make_bump(0.0f64), Err(Error::MeasureConstraint(_))));
        assert!(make_bump(1.0f64 / 40.0).is_ok());
    }

    #[test]
    fn m_against_dense_separable_grid() {
        // Oracle: the product s(x) g(y) is minimized at (argmax/argmin s,
        // argmin/argmax g) combinations, so a 10^4 x 10^4 grid reduces to
        // two 10^4-point scans.
        let b = make_bump(1.0f64 / 40.0).unwrap();
        let d = b.delta();
        let n = 10_000;
        let grid: Vec<f64> = (0..=n).map(|i| d * i as f64 / n as f64).collect();
        let s: Vec<f64> = grid.iter().map(|&x| b.eval(x)).collect();
        let g: Vec<f64> = grid.iter().map(|&y| b.product_derivative(y)).collect();
        let (smin, smax) = s.iter().fold((f64::MAX, f64::MIN), |(a, c), &v| (a.min(v), c.max(v)));
        let (gmin, gmax) = g.iter().fold((f64::MAX, f64::MIN), |(a, c), &v| (a.min(v), c.max(v)));
        let oracle_min = [smin * gmin, smin * gmax, smax * gmin, smax * gmax].into_iter().fold(f64::MAX, f64::min);
        let m = compute_m(&b, &BumpBoundSearch::standard(&b)).unwrap();
        let oracle = -oracle_min;
        assert!(m.m >= oracle - 1e-12);
        assert!((m.m - oracle).abs() / oracle < 1e-6, "{} vs {}", m.m, oracle);
        assert!((m.m - 2.748556717).abs() < 1e-6);
    }

    #[test]
    fn m_is_symmetric_in_x() {
        let b = make_bump(1.0f64 / 40.0).unwrap();
        let d = b.delta();
        let pos = compute_m(&b, &BumpBoundSearch::standard(&b)).unwrap();
        let neg = compute_m(&b, &BumpBoundSearch { x_range: (-d, 0.0), y_range: (0.0, d), nodes: 2001 }).unwrap();
        assert!((pos.m - neg.m).abs() < 1e-12);
    }

    #[test]
    fn m_is_scale_invariant() {
        let a = make_bump(1.0f64 / 40.0).unwrap();
        let b = make_bump(1.0f64 / 100.0).unwrap();
        let ma = compute_m(&a, &BumpBoundSearch::standard(&a)).unwrap().m;
        let mb = compute_m(&b, &BumpBoundSearch::standard(&b)).unwrap().m;
        assert!((ma - mb).abs() < 1e-9);
    }

    #[test]
    fn single_precision_bump() {
        let b = make_bump(1.0f32 / 40.0).unwrap();
        assert_eq!(b.eval(0.0), 1.0);
        let m = compute_m(&b, &BumpBoundSearch { nodes: 401, ..BumpBoundSearch::standard(&b) }).unwrap();
        assert!((m.m - 2.7485567).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn bump_range_and_parity(x in -0.05f64..0.05) {
            let b = make_bump(1.0f64 / 40.0).unwrap();
            let s = b.eval(x);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, b.eval(-x));
            prop_assert_eq!(b.derivative(x), -b.derivative(-x));
            prop_assert!((b.complement(x) - (1.0 - s)).abs() < 1e-15);
        }

        #[test]
        fn bump_monotone_on_half_line(x in 0.0f64..0.03, dx in 0.0f64..0.01) {
            let b = make_bump(1.0f64 / 40.0).unwrap();
            prop_assert!(b.eval(x + dx) <= b.eval(x));
            prop_assert!(b.derivative(x) <= 0.0);
        }
    }
}
