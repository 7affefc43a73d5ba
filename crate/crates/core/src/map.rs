//! The common interface of every dynamical system in the crate.

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::torus::TorusPoint;
use nalgebra::{DMatrix, DVector};

/// A diffeomorphism of `T^d`, given by a lift to `R^d`.
///
/// Jacobians are expressed in the map's orthonormal [`frame`](TorusMap::frame):
/// if `R` is the frame, the standard-coordinate derivative is `R J R^T`.
pub trait TorusMap<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn apply_lift(&self, x: &DVector<T>) -> Result<DVector<T>>;

    fn apply_inverse_lift(&self, x: &DVector<T>) -> Result<DVector<T>>;

    /// Derivative at `x`, in frame coordinates.
    fn jacobian(&self, x: &TorusPoint<T>) -> Result<DMatrix<T>>;

    /// Derivative of the inverse map at `f(y)`, i.e. `Df(y)^{-1}`.
    fn jacobian_inverse_at_preimage(&self, y: &TorusPoint<T>) -> Result<DMatrix<T>> {
        let j = self.jacobian(y)?;
        j.try_inverse().ok_or_else(|| Error::Precondition("singular Jacobian".into()))
    }

    /// Columns are the frame vectors in standard coordinates.
    fn frame(&self) -> DMatrix<T> {
        DMatrix::identity(self.dim(), self.dim())
    }

    fn apply(&self, x: &TorusPoint<T>) -> Result<TorusPoint<T>> {
        Ok(TorusPoint::from_vector(&self.apply_lift(&x.to_vector())?))
    }

    fn apply_inverse(&self, x: &TorusPoint<T>) -> Result<TorusPoint<T>> {
        Ok(TorusPoint::from_vector(&self.apply_inverse_lift(&x.to_vector())?))
    }

    /// Derivative of the inverse at `x`.
    fn jacobian_inverse(&self, x: &TorusPoint<T>) -> Result<DMatrix<T>> {
        let y = self.apply_inverse(x)?;
        self.jacobian_inverse_at_preimage(&y)
    }

    fn iterate(&self, x: &TorusPoint<T>, n: usize) -> Result<TorusPoint<T>> {
        let mut y = x.clone();
        for _ in 0..n {
            y = self.apply(&y)?;
        }
        Ok(y)
    }

    fn iterate_inverse(&self, x: &TorusPoint<T>, n: usize) -> Result<TorusPoint<T>> {
        let mut y = x.clone();
        for _ in 0..n {
            y = self.apply_inverse(&y)?;
        }
        Ok(y)
    }
}

impl<T: Real, M: TorusMap<T> + ?Sized> TorusMap<T> for Box<M> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply_lift(&self, x: &DVector<T>) -> Result<DVector<T>> {
        (**self).apply_lift(x)
    }
    fn apply_inverse_lift(&self, x: &DVector<T>) -> Result<DVector<T>> {
        (**self).apply_inverse_lift(x)
    }
    fn jacobian(&self, x: &TorusPoint<T>) -> Result<DMatrix<T>> {
        (**self).jacobian(x)
    }
    fn jacobian_inverse_at_preimage(&self, y: &TorusPoint<T>) -> Result<DMatrix<T>> {
        (**self).jacobian_inverse_at_preimage(y)
    }
    fn frame(&self) -> DMatrix<T> {
        (**self).frame()
    }
}

/// Central-difference derivative of `map` at `x` in the map's frame, using
/// only point evaluations. Serves as an independent check of the analytic
/// Jacobian.
pub fn finite_difference_jacobian<T: Real, M: TorusMap<T> + ?Sized>(
    map: &M,
    x: &TorusPoint<T>,
    h: T,
) -> Result<DMatrix<T>> {
    let d = map.dim();
    let r = map.frame();
    let base = x.to_vector();
    let two_h = h + h;
    let mut j = DMatrix::zeros(d, d);
    for col in 0..d {
        let e = r.column(col).into_owned() * h;
        let plus = map.apply_lift(&(&base + &e))?;
        let minus = map.apply_lift(&(&base - &e))?;
        // The lift difference is an honest vector; no wrapping needed.
        let diff = r.transpose() * (plus - minus) / two_h;
        j.set_column(col, &diff);
    }
    Ok(j)
}

/// Relative Frobenius error `|A - B| / |B|`.
pub fn relative_frobenius_error<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    let denom = b.norm().max(lit(1e-300));
    (a - b).norm() / denom
}

/// Systems with a distinguished strong-unstable reference direction.
pub trait StrongUnstable<T: Real>: TorusMap<T> {
    /// Unit vector (frame coordinates) lying in the strong-unstable cone
    /// everywhere; pushing it forward converges to the strong-unstable bundle.
    fn strong_unstable_axis(&self) -> DVector<T>;
}
