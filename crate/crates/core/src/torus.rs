//! Points of the flat torus `R^d / Z^d`.

use crate::scalar::Real;
use nalgebra::DVector;

/// Reduces `x` into `[0, 1)`. The value `1.0` (which `x - floor(x)` can
/// produce for tiny negative inputs) maps to `0.0`.
#[inline]
pub fn reduce<T: Real>(x: T) -> T {
    let r = x - x.floor();
    if r >= T::one() || r < T::zero() {
        T::zero()
    } else {
        r
    }
}

/// Representative of `x mod 1` in `[-1/2, 1/2)`.
#[inline]
pub fn wrap_centered<T: Real>(x: T) -> T {
    let half = T::one() / (T::one() + T::one());
    let r = reduce(x + half) - half;
    if r >= half {
        r - T::one()
    } else {
        r
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TorusPoint<T> {
    coords: Vec<T>,
}

impl<T: Real> TorusPoint<T> {
    /// Builds a point, reducing every coordinate into `[0, 1)`.
    pub fn new(coords: Vec<T>) -> Self {
        Self { coords: coords.into_iter().map(reduce).collect() }
    }

    pub fn from_slice(coords: &[T]) -> Self {
        Self::new(coords.to_vec())
    }

    pub fn from_vector(v: &DVector<T>) -> Self {
        Self::new(v.iter().copied().collect())
    }

    pub fn origin(dim: usize) -> Self {
        Self { coords: vec![T::zero(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn to_vector(&self) -> DVector<T> {
        DVector::from_column_slice(&self.coords)
    }

    /// Shortest displacement `other - self`, each component in `[-1/2, 1/2)`.
    pub fn displacement_to(&self, other: &Self) -> DVector<T> {
        DVector::from_iterator(self.dim(), self.coords.iter().zip(&other.coords).map(|(&a, &b)| wrap_centered(b - a)))
    }

    /// Euclidean distance on the flat torus.
    pub fn distance(&self, other: &Self) -> T {
        self.displacement_to(other).norm()
    }

    /// Sup-norm distance on the flat torus.
    pub fn sup_distance(&self, other: &Self) -> T {
        self.displacement_to(other).amax()
    }

    /// `self + v (mod 1)`.
    pub fn translate(&self, v: &DVector<T>) -> Self {
        Self::new(self.coords.iter().zip(v.iter()).map(|(&a, &b)| a + b).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reduction_edge_cases() {
        assert_eq!(reduce(1.0f64), 0.0);
        assert_eq!(reduce(-1e-300f64), 0.0);
        assert_eq!(reduce(-0.25f64), 0.75);
        assert_eq!(wrap_centered(0.5f64), -0.5);
        assert_eq!(wrap_centered(0.75f64), -0.25);
    }

    proptest! {
        #[test]
        fn reduction_is_idempotent(xs in proptest::collection::vec(-1e6f64..1e6, 1..6)) {
            let p = TorusPoint::new(xs);
            for &c in p.coords() {
                prop_assert!((0.0..1.0).contains(&c));
            }
            prop_assert_eq!(TorusPoint::new(p.coords().to_vec()), p);
        }

        #[test]
        fn wrapped_difference_is_centered(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let w = wrap_centered(b - a);
            prop_assert!((-0.5..0.5).contains(&w));
            let k = (b - a - w).round();
            prop_assert!((b - a - w - k).abs() < 1e-12);
        }
    }
}
