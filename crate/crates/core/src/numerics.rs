//! Small numerical kernels: safeguarded Newton, Gram-Schmidt, 2-plane norms.

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};
use nalgebra::{DMatrix, DVector};

/// Safeguarded Newton iteration for an increasing function on `[lo, hi]`.
///
/// `f` returns `(value, derivative)`; the root must be bracketed, i.e.
/// `f(lo) <= 0 <= f(hi)`. Falls back to bisection whenever the Newton step
/// leaves the bracket or fails to halve it.
pub fn rtsafe<T: Real>(f: impl Fn(T) -> (T, T), lo: T, hi: T, max_iter: usize) -> Result<T> {
    let (flo, _) = f(lo);
    let (fhi, _) = f(hi);
    if flo == T::zero() {
        return Ok(lo);
    }
    if fhi == T::zero() {
        return Ok(hi);
    }
    if flo > T::zero() || fhi < T::zero() {
        return Err(Error::RootFind {
            lo: to_f64(lo),
            hi: to_f64(hi),
            iterations: 0,
            residual: to_f64(flo.abs().min(fhi.abs())),
        });
    }
    let tol = T::default_epsilon() * lit(16.0) * (hi - lo);
    let (mut a, mut b) = (lo, hi);
    let half: T = lit(0.5);
    let mut x = (a + b) * half;
    let mut dx_old = b - a;
    let mut dx = dx_old;
    let (mut fx, mut dfx) = f(x);
    for _ in 0..max_iter {
        let newton_ok = dfx > T::zero() && {
            let next = x - fx / dfx;
            next > a && next < b && (fx + fx).abs() <= (dx_old * dfx).abs()
        };
        dx_old = dx;
        if newton_ok {
            dx = fx / dfx;
            x -= dx;
        } else {
            dx = (b - a) * half;
            x = a + dx;
        }
        if dx.abs() < tol || b - a < tol {
            return Ok(x);
        }
        let (v, d) = f(x);
        fx = v;
        dfx = d;
        if fx == T::zero() {
            return Ok(x);
        }
        if fx < T::zero() {
            a = x;
        } else {
            b = x;
        }
    }
    Err(Error::RootFind { lo: to_f64(a), hi: to_f64(b), iterations: max_iter, residual: to_f64(fx) })
}

/// Modified Gram-Schmidt on the columns of `z`, in place. Returns the
/// diagonal of `R` (non-negative).
pub fn gram_schmidt<T: Real>(z: &mut DMatrix<T>) -> Vec<T> {
    let k = z.ncols();
    let mut diag = Vec::with_capacity(k);
    for i in 0..k {
        for j in 0..i {
            let r = z.column(j).dot(&z.column(i));
            let qj = z.column(j).into_owned();
            z.column_mut(i).axpy(-r, &qj, T::one());
        }
        let n = z.column(i).norm();
        diag.push(n);
        if n > T::zero() {
            z.column_mut(i).unscale_mut(n);
        }
    }
    diag
}

/// Largest singular value of a `d x 2` matrix.
pub fn operator_norm_2col<T: Real>(m: &DMatrix<T>) -> T {
    debug_assert_eq!(m.ncols(), 2);
    let a = m.column(0).norm_squared();
    let c = m.column(1).norm_squared();
    let b = m.column(0).dot(&m.column(1));
    let half: T = lit(0.5);
    let mean = (a + c) * half;
    let rad = (((a - c) * half).powi(2) + b * b).sqrt();
    (mean + rad).max(T::zero()).sqrt()
}

/// Sine of the angle between two lines spanned by (nonzero) vectors.
pub fn line_separation<T: Real>(u: &DVector<T>, v: &DVector<T>) -> T {
    let un = u.normalize();
    let vn = v.normalize();
    let c = un.dot(&vn);
    (&vn - &un * c).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rtsafe_cubic() {
        let r = rtsafe(|x: f64| (x * x * x - 2.0, 3.0 * x * x), 0.0, 2.0, 200).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn rtsafe_rejects_unbracketed() {
        assert!(matches!(rtsafe(|x: f64| (x + 5.0, 1.0), 0.0, 1.0, 50), Err(Error::RootFind { .. })));
    }

    #[test]
    fn rtsafe_flat_derivative_falls_back_to_bisection() {
        let r = rtsafe(|x: f64| ((x - 0.3).powi(3), 0.0), 0.0, 1.0, 200).unwrap();
        assert!((r - 0.3).abs() < 1e-5);
    }

    #[test]
    fn gram_schmidt_orthonormalizes() {
        let mut z = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0f64]);
        let d = gram_schmidt(&mut z);
        assert!((d[0] - 1.0).abs() < 1e-15 && (d[1] - 1.0).abs() < 1e-15);
        assert!((z.transpose() * &z - DMatrix::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn operator_norm_matches_svd() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.3, 4.0, 1.0f64]);
        let s = m.clone().svd(false, false).singular_values.max();
        assert!((operator_norm_2col(&m) - s).abs() < 1e-12);
    }
}
