//! Hyperbolic toral automorphisms: exact integer algebra, periodic points,
//! and the spectral splitting.

use crate::cone::{BundleAxes, SplitSystem};
use crate::error::{Error, Result};
use crate::map::{StrongUnstable, TorusMap};
use crate::scalar::{lit, to_f64, Real};
use crate::torus::TorusPoint;
use nalgebra::{DMatrix, DVector};

/// Hyperbolicity threshold for eigenvalue moduli.
pub const HYPERBOLICITY_TOL: f64 = 1e-9;

/// Default cap on the number of periodic points [`enumerate_periodic`] lists.
pub const DEFAULT_POINT_CAP: u128 = 1_000_000;

/// Square integer matrix with checked `i128` arithmetic.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IntegerMatrix {
    dim: usize,
    entries: Vec<i128>,
}

fn overflow(what: &str) -> Error {
    Error::Overflow(what.to_string())
}

impl IntegerMatrix {
    /// Row-major construction; no determinant requirement.
    pub fn from_row_major(dim: usize, entries: Vec<i128>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::Precondition(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Ok(Self { dim, entries })
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Precondition("matrix rows must form a square".into()));
        }
        Self::from_row_major(dim, rows.iter().flatten().map(|&v| v as i128).collect())
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1;
        }
        Self { dim, entries }
    }

    /// The 2x2 cat map `[[2, 1], [1, 1]]`.
    pub fn cat() -> Self {
        Self { dim: 2, entries: vec![2, 1, 1, 1] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> i128 {
        self.entries[i * self.dim + j]
    }

    fn set(&mut self, i: usize, j: usize, v: i128) {
        self.entries[i * self.dim + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<i128>> {
        self.entries.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let d = self.dim;
        let mut out = vec![0i128; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc: i128 = 0;
                for k in 0..d {
                    let p = self.get(i, k).checked_mul(other.get(k, j)).ok_or_else(|| overflow("matrix product"))?;
                    acc = acc.checked_add(p).ok_or_else(|| overflow("matrix product"))?;
                }
                out[i * d + j] = acc;
            }
        }
        Ok(Self { dim: d, entries: out })
    }

    /// `self^n` by repeated squaring.
    pub fn checked_pow(&self, n: u32) -> Result<Self> {
        let mut result = Self::identity(self.dim);
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                result = result.checked_mul(&base)?;
            }
            e >>= 1;
            if e > 0 {
                base = base.checked_mul(&base)?;
            }
        }
        Ok(result)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.checked_sub(*b).ok_or_else(|| overflow("matrix difference")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim: self.dim, entries })
    }

    /// Exact determinant (fraction-free Bareiss elimination).
    pub fn determinant(&self) -> Result<i128> {
        let d = self.dim;
        let mut m = self.entries.clone();
        let mut sign = 1i128;
        let mut prev = 1i128;
        for k in 0..d.saturating_sub(1) {
            if m[k * d + k] == 0 {
                match (k + 1..d).find(|&r| m[r * d + k] != 0) {
                    Some(r) => {
                        for c in 0..d {
                            m.swap(k * d + c, r * d + c);
                        }
                        sign = -sign;
                    }
                    None => return Ok(0),
                }
            }
            for i in k + 1..d {
                for j in k + 1..d {
                    let a = m[i * d + j].checked_mul(m[k * d + k]).ok_or_else(|| overflow("determinant"))?;
                    let b = m[i * d + k].checked_mul(m[k * d + j]).ok_or_else(|| overflow("determinant"))?;
                    m[i * d + j] = a.checked_sub(b).ok_or_else(|| overflow("determinant"))? / prev;
                }
            }
            prev = m[k * d + k];
        }
        Ok(sign * m[d * d - 1])
    }

    fn minor(&self, row: usize, col: usize) -> Self {
        let d = self.dim;
        let mut entries = Vec::with_capacity((d - 1) * (d - 1));
        for i in (0..d).filter(|&i| i != row) {
            for j in (0..d).filter(|&j| j != col) {
                entries.push(self.get(i, j));
            }
        }
        Self { dim: d - 1, entries }
    }

    /// Inverse of a unimodular matrix (adjugate times the determinant).
    pub fn inverse_unimodular(&self) -> Result<Self> {
        let det = self.determinant()?;
        if det.abs() != 1 {
            return Err(Error::NotUnimodular { det });
        }
        let d = self.dim;
        if d == 1 {
            return Ok(Self { dim: 1, entries: vec![det] });
        }
        let mut inv = Self::identity(d);
        for i in 0..d {
            for j in 0..d {
                let cof = self.minor(j, i).determinant()?;
                let s = if (i + j) % 2 == 0 { 1 } else { -1 };
                inv.set(i, j, s * cof * det);
            }
        }
        Ok(inv)
    }

    /// Block-diagonal direct sum.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let d = self.dim + other.dim;
        let mut out = Self { dim: d, entries: vec![0; d * d] };
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.set(i, j, self.get(i, j));
            }
        }
        for i in 0..other.dim {
            for j in 0..other.dim {
                out.set(self.dim + i, self.dim + j, other.get(i, j));
            }
        }
        out
    }

    pub fn to_float<T: Real>(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| lit::<T>(self.get(i, j) as f64))
    }

    /// `Some(k)` if the matrix is block diagonal with an upper-left `k x k`
    /// block (`0 < k < dim`).
    fn block_split(&self, k: usize) -> bool {
        let d = self.dim;
        (0..k).all(|i| (k..d).all(|j| self.get(i, j) == 0 && self.get(j, i) == 0))
    }
}

/// `|det(A^n - I)|`: the number of points of period dividing `n`.
pub fn fixed_point_count(a: &IntegerMatrix, n: u32) -> Result<u128> {
    if n == 0 {
        return Err(Error::Precondition("period must be at least 1".into()));
    }
    let b = a.checked_pow(n)?.checked_sub(&IntegerMatrix::identity(a.dim()))?;
    let det = b.determinant()?;
    if det == 0 {
        return Err(Error::Precondition(format!("A^{n} - I is singular; A^{n} is not hyperbolic")));
    }
    Ok(det.unsigned_abs())
}

/// Diagonalizes `b` by unimodular row/column operations: `U b V = D`.
/// Returns `(D diagonal entries, V)`; `U` is not needed by callers.
fn smith_diagonal(b: &IntegerMatrix) -> Result<(Vec<i128>, IntegerMatrix)> {
    let d = b.dim();
    let mut m = b.clone();
    let mut v = IntegerMatrix::identity(d);
    let ck = |x: Option<i128>| x.ok_or_else(|| overflow("Smith reduction"));
    for t in 0..d {
        loop {
            // Smallest nonzero entry in the trailing block becomes the pivot.
            let mut best: Option<(usize, usize)> = None;
            for i in t..d {
                for j in t..d {
                    let x = m.get(i, j);
                    if x != 0 && best.is_none_or(|(bi, bj)| x.abs() < m.get(bi, bj).abs()) {
                        best = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = best else {
                return Err(Error::Precondition("singular matrix in Smith reduction".into()));
            };
            if pi != t {
                for c in 0..d {
                    let (x, y) = (m.get(t, c), m.get(pi, c));
                    m.set(t, c, y);
                    m.set(pi, c, x);
                }
            }
            if pj != t {
                for r in 0..d {
                    let (x, y) = (m.get(r, t), m.get(r, pj));
                    m.set(r, t, y);
                    m.set(r, pj, x);
                    let (x, y) = (v.get(r, t), v.get(r, pj));
                    v.set(r, t, y);
                    v.set(r, pj, x);
                }
            }
            let p = m.get(t, t);
            let mut clean = true;
            for i in t + 1..d {
                let q = m.get(i, t) / p;
                if q != 0 {
                    for c in 0..d {
                        let val = ck(m.get(i, c).checked_sub(ck(q.checked_mul(m.get(t, c)))?))?;
                        m.set(i, c, val);
                    }
                }
                clean &= m.get(i, t) == 0;
            }
            for j in t + 1..d {
                let q = m.get(t, j) / p;
                if q != 0 {
                    for r in 0..d {
                        let val = ck(m.get(r, j).checked_sub(ck(q.checked_mul(m.get(r, t)))?))?;
                        m.set(r, j, val);
                        let val = ck(v.get(r, j).checked_sub(ck(q.checked_mul(v.get(r, t)))?))?;
                        v.set(r, j, val);
                    }
                }
                clean &= m.get(t, j) == 0;
            }
            if clean {
                break;
            }
        }
        if m.get(t, t) < 0 {
            for r in 0..d {
                m.set(r, t, -m.get(r, t));
                v.set(r, t, -v.get(r, t));
            }
        }
    }
    Ok(((0..d).map(|i| m.get(i, i)).collect(), v))
}

/// Periodic points as exact rationals: coordinate `i` of point `p` is
/// `numerators[p][i] / denominator`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicLattice {
    pub denominator: i128,
    pub numerators: Vec<Vec<i128>>,
}

impl PeriodicLattice {
    pub fn points<T: Real>(&self) -> Vec<TorusPoint<T>> {
        let den = self.denominator as f64;
        self.numerators.iter().map(|p| TorusPoint::new(p.iter().map(|&n| lit::<T>(n as f64 / den)).collect())).collect()
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// All points with `A^n x = x (mod 1)`, exact, sorted lexicographically.
pub fn enumerate_periodic_exact(a: &IntegerMatrix, n: u32, cap: u128) -> Result<PeriodicLattice> {
    let count = fixed_point_count(a, n)?;
    if count > cap {
        return Err(Error::TooManyPoints { count, cap });
    }
    let b = a.checked_pow(n)?.checked_sub(&IntegerMatrix::identity(a.dim()))?;
    let (diag, v) = smith_diagonal(&b)?;
    let d = a.dim();
    let lcm = diag.iter().fold(1i128, |l, &s| l / gcd(l, s) * s);
    // x = V y with y_i in (1/s_i) Z / Z; the map y -> V y is a bijection of
    // the torus, so distinct y give distinct x.
    let mut out = Vec::with_capacity(count as usize);
    let mut idx = vec![0i128; d];
    loop {
        let mut num = vec![0i128; d];
        for (k, nk) in num.iter_mut().enumerate() {
            let mut acc = 0i128;
            for i in 0..d {
                acc += v.get(k, i) * idx[i] * (lcm / diag[i]);
            }
            *nk = acc.rem_euclid(lcm);
        }
        out.push(num);
        let mut i = 0;
        loop {
            if i == d {
                out.sort();
                return Ok(PeriodicLattice { denominator: lcm, numerators: out });
            }
            idx[i] += 1;
            if idx[i] < diag[i] {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

pub fn enumerate_periodic<T: Real>(a: &IntegerMatrix, n: u32) -> Result<Vec<TorusPoint<T>>> {
    Ok(enumerate_periodic_exact(a, n, DEFAULT_POINT_CAP)?.points())
}

/// Eigenvalues sorted by decreasing modulus with unit eigenvectors.
#[derive(Clone, Debug)]
pub struct SpectralSplitting<T> {
    pub eigenvalues: Vec<T>,
    pub eigenvectors: Vec<DVector<T>>,
    /// `max_i |A v_i - lambda_i v_i|`.
    pub residual: T,
}

impl<T: Real> SpectralSplitting<T> {
    pub fn unstable_dim(&self) -> usize {
        self.eigenvalues.iter().filter(|l| l.abs() > T::one()).count()
    }
}

fn eigen_2x2<T: Real>(a: &IntegerMatrix) -> Result<(Vec<T>, Vec<DVector<T>>)> {
    let (p, q, r, s) = (a.get(0, 0), a.get(0, 1), a.get(1, 0), a.get(1, 1));
    let tr = p + s;
    let det = p * s - q * r;
    let disc = tr * tr - 4 * det;
    if disc <= 0 {
        // Complex or repeated eigenvalues of a unimodular matrix: modulus 1.
        return Err(Error::NotHyperbolic { modulus: 1.0, tolerance: HYPERBOLICITY_TOL });
    }
    let sq = (disc as f64).sqrt();
    let big = if tr >= 0 { (tr as f64 + sq) / 2.0 } else { (tr as f64 - sq) / 2.0 };
    let small = det as f64 / big;
    for m in [big.abs(), small.abs()] {
        if (m - 1.0).abs() < HYPERBOLICITY_TOL {
            return Err(Error::NotHyperbolic { modulus: m, tolerance: HYPERBOLICITY_TOL });
        }
    }
    let vec_for = |l: f64| {
        let c1 = [q as f64, l - p as f64];
        let c2 = [l - s as f64, r as f64];
        let pick = if c1[0].hypot(c1[1]) >= c2[0].hypot(c2[1]) { c1 } else { c2 };
        let n = pick[0].hypot(pick[1]);
        let mut v = [pick[0] / n, pick[1] / n];
        // Canonical sign: first nonzero component positive.
        if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
            v = [-v[0], -v[1]];
        }
        DVector::from_vec(vec![lit::<T>(v[0]), lit::<T>(v[1])])
    };
    Ok((vec![lit(big), lit(small)], vec![vec_for(big), vec_for(small)]))
}

/// Eigen-decomposition of a hyperbolic automorphism of `T^2`, or of a
/// block-diagonal automorphism of `T^4` built from two such blocks.
pub fn eigen_split<T: Real>(a: &IntegerMatrix) -> Result<SpectralSplitting<T>> {
    let (vals, vecs): (Vec<T>, Vec<DVector<T>>) = match a.dim() {
        2 => eigen_2x2(a)?,
        4 if a.block_split(2) => {
            let sub = |o: usize| {
                IntegerMatrix::from_row_major(
                    2,
                    vec![a.get(o, o), a.get(o, o + 1), a.get(o + 1, o), a.get(o + 1, o + 1)],
                )
            };
            let (v1, e1) = eigen_2x2::<T>(&sub(0)?)?;
            let (v2, e2) = eigen_2x2::<T>(&sub(2)?)?;
            let pad = |v: &DVector<T>, o: usize| {
                let mut w = DVector::zeros(4);
                w[o] = v[0];
                w[o + 1] = v[1];
                w
            };
            let mut pairs: Vec<(T, DVector<T>)> = v1
                .into_iter()
                .zip(e1.iter().map(|v| pad(v, 0)))
                .chain(v2.into_iter().zip(e2.iter().map(|v| pad(v, 2))))
                .collect();
            // Stable sort keeps the first block first on ties.
            pairs.sort_by(|x, y| y.0.abs().partial_cmp(&x.0.abs()).unwrap());
            pairs.into_iter().unzip()
        }
        d => {
            return Err(Error::Precondition(format!(
                "eigen-splitting supports 2x2 matrices and block-diagonal 4x4 matrices with 2x2 blocks; got a {d}x{d} matrix"
            )))
        }
    };
    let af = a.to_float::<T>();
    let residual = vals.iter().zip(&vecs).map(|(&l, v)| (&af * v - v * l).amax()).fold(T::zero(), |m, r| m.max(r));
    Ok(SpectralSplitting { eigenvalues: vals, eigenvectors: vecs, residual })
}

/// A hyperbolic toral automorphism acting on `T^d`.
#[derive(Clone, Debug)]
pub struct ToralAutomorphism<T> {
    matrix: IntegerMatrix,
    inverse: IntegerMatrix,
    float: DMatrix<T>,
    float_inv: DMatrix<T>,
    splitting: SpectralSplitting<T>,
}

impl<T: Real> ToralAutomorphism<T> {
    pub fn new(matrix: IntegerMatrix) -> Result<Self> {
        let inverse = matrix.inverse_unimodular()?;
        let splitting = eigen_split(&matrix)?;
        Ok(Self { float: matrix.to_float(), float_inv: inverse.to_float(), matrix, inverse, splitting })
    }

    pub fn matrix(&self) -> &IntegerMatrix {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &IntegerMatrix {
        &self.inverse
    }

    pub fn float_matrix(&self) -> &DMatrix<T> {
        &self.float
    }

    pub fn splitting(&self) -> &SpectralSplitting<T> {
        &self.splitting
    }

    /// Largest eigenvalue modulus.
    pub fn unstable_rate(&self) -> T {
        self.splitting.eigenvalues[0].abs()
    }

    /// Smallest eigenvalue modulus.
    pub fn stable_rate(&self) -> T {
        self.splitting.eigenvalues.last().unwrap().abs()
    }

    /// Topological entropy `sum log |lambda|` over unstable eigenvalues.
    pub fn entropy(&self) -> T {
        self.splitting.eigenvalues.iter().filter(|l| l.abs() > T::one()).fold(T::zero(), |s, l| s + l.abs().ln())
    }
}

impl<T: Real> TorusMap<T> for ToralAutomorphism<T> {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn apply_lift(&self, x: &DVector<T>) -> Result<DVector<T>> {
        Ok(&self.float * x)
    }

    fn apply_inverse_lift(&self, x: &DVector<T>) -> Result<DVector<T>> {
        Ok(&self.float_inv * x)
    }

    fn jacobian(&self, _x: &TorusPoint<T>) -> Result<DMatrix<T>> {
        Ok(self.float.clone())
    }

    fn jacobian_inverse_at_preimage(&self, _y: &TorusPoint<T>) -> Result<DMatrix<T>> {
        Ok(self.float_inv.clone())
    }
}

impl<T: Real> StrongUnstable<T> for ToralAutomorphism<T> {
    fn strong_unstable_axis(&self) -> DVector<T> {
        self.splitting.eigenvectors[0].clone()
    }
}

/// On `T^4` with two expanding and two contracting eigenvalues the bundles
/// are the eigenlines, ordered by modulus.
impl<T: Real> SplitSystem<T> for ToralAutomorphism<T> {
    fn bundle_axes(&self) -> BundleAxes<T> {
        assert!(
            self.dim() == 4 && self.splitting.unstable_dim() == 2,
            "four-bundle splitting needs a 4x4 automorphism with two expanding directions"
        );
        let e = &self.splitting.eigenvectors;
        BundleAxes { uu: e[0].clone(), cu: e[1].clone(), cs: e[2].clone(), ss: e[3].clone() }
    }
}

/// `true` when every eigenvalue modulus is bounded away from 1.
pub fn is_hyperbolic(a: &IntegerMatrix) -> bool {
    eigen_split::<f64>(a).is_ok()
}

/// Diagnostic: eigenvalue moduli as `f64`.
pub fn eigenvalue_moduli<T: Real>(s: &SpectralSplitting<T>) -> Vec<f64> {
    s.eigenvalues.iter().map(|&l| to_f64(l.abs())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force count of rational points `j/N` fixed by `A^n`, with `N`
    /// the determinant (every fixed point has denominator dividing it).
    fn brute_force_fixed(a: &IntegerMatrix, n: u32) -> Vec<Vec<i128>> {
        let b = a.checked_pow(n).unwrap();
        let big_n = fixed_point_count(a, n).unwrap() as i128;
        let d = a.dim();
        let mut out = Vec::new();
        let total = (big_n as usize).pow(d as u32);
        for flat in 0..total {
            let mut idx = vec![0i128; d];
            let mut f = flat;
            for x in idx.iter_mut() {
                *x = (f % big_n as usize) as i128;
                f /= big_n as usize;
            }
            let fixed = (0..d).all(|i| {
                let s: i128 = (0..d).map(|j| b.get(i, j) * idx[j]).sum();
                (s - idx[i]).rem_euclid(big_n) == 0
            });
            if fixed {
                out.push(idx);
            }
        }
        out.sort();
        out
    }

    fn scaled(l: &PeriodicLattice, to: i128) -> Vec<Vec<i128>> {
        let mut v: Vec<Vec<i128>> =
            l.numerators.iter().map(|p| p.iter().map(|&x| x * (to / l.denominator)).collect()).collect();
        v.sort();
        v
    }

    #[test]
    fn cat_map_periodic_counts() {
        let d = IntegerMatrix::cat();
        let counts: Vec<u128> = (1..=5).map(|n| fixed_point_count(&d, n).unwrap()).collect();
        assert_eq!(counts, vec![1, 5, 16, 45, 121]);
    }

    #[test]
    fn enumeration_matches_brute_force() {
        let d = IntegerMatrix::cat();
        for n in 1..=4 {
            let l = enumerate_periodic_exact(&d, n, DEFAULT_POINT_CAP).unwrap();
            let big_n = fixed_point_count(&d, n).unwrap() as i128;
            assert_eq!(big_n % l.denominator, 0);
            assert_eq!(scaled(&l, big_n), brute_force_fixed(&d, n));
        }
        let a = IntegerMatrix::from_rows(&[vec![3, 1], vec![2, 1]]).unwrap();
        for n in 1..=3 {
            let l = enumerate_periodic_exact(&a, n, DEFAULT_POINT_CAP).unwrap();
            let big_n = fixed_point_count(&a, n).unwrap() as i128;
            assert_eq!(scaled(&l, big_n), brute_force_fixed(&a, n));
        }
    }

    #[test]
    fn enumerated_points_are_fixed_in_floating_point() {
        let d = IntegerMatrix::cat();
        let t = ToralAutomorphism::<f64>::new(d.clone()).unwrap();
        for p in enumerate_periodic::<f64>(&d, 3).unwrap() {
            let q = t.iterate(&p, 3).unwrap();
            assert!(p.distance(&q) < 1e-12);
        }
    }

    #[test]
    fn direct_sum_counts_multiply() {
        let a = IntegerMatrix::cat().checked_pow(2).unwrap().direct_sum(&IntegerMatrix::cat());
        for n in 1..=3 {
            let c = fixed_point_count(&a, n).unwrap();
            let c1 = fixed_point_count(&IntegerMatrix::cat().checked_pow(2).unwrap(), n).unwrap();
            let c2 = fixed_point_count(&IntegerMatrix::cat(), n).unwrap();
            assert_eq!(c, c1 * c2);
        }
        assert_eq!(enumerate_periodic_exact(&a, 1, 1000).unwrap().numerators.len(), 5);
    }

    #[test]
    fn identity_is_rejected() {
        assert!(matches!(eigen_split::<f64>(&IntegerMatrix::identity(2)), Err(Error::NotHyperbolic { .. })));
        assert!(fixed_point_count(&IntegerMatrix::identity(2), 1).is_err());
    }

    #[test]
    fn period_zero_is_rejected() {
        assert!(matches!(fixed_point_count(&IntegerMatrix::cat(), 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!(IntegerMatrix::cat().checked_pow(200), Err(Error::Overflow(_))));
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(enumerate_periodic_exact(&IntegerMatrix::cat(), 10, 100), Err(Error::TooManyPoints { .. })));
    }

    #[test]
    fn non_unimodular_is_rejected() {
        let m = IntegerMatrix::from_rows(&[vec![2, 0], vec![0, 1]]).unwrap();
        assert!(matches!(ToralAutomorphism::<f64>::new(m), Err(Error::NotUnimodular { det: 2 })));
    }

    #[test]
    fn non_block_4x4_is_rejected() {
        let m = IntegerMatrix::from_rows(&[vec![2, 1, 1, 0], vec![1, 1, 0, 0], vec![0, 0, 2, 1], vec![0, 0, 1, 1]])
            .unwrap();
        assert!(matches!(eigen_split::<f64>(&m), Err(Error::Precondition(_))));
    }

    #[test]
    fn cat_splitting() {
        let s = eigen_split::<f64>(&IntegerMatrix::cat()).unwrap();
        let phi = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((s.eigenvalues[0] - phi).abs() < 1e-15);
        assert!((s.eigenvalues[1] - 1.0 / phi).abs() < 1e-15);
        assert!(s.residual < 1e-12);
        assert!(s.eigenvectors[0].dot(&s.eigenvectors[1]).abs() < 1e-15);
    }

    #[test]
    fn block_splitting_sorted() {
        let a = IntegerMatrix::cat().checked_pow(3).unwrap().direct_sum(&IntegerMatrix::cat());
        let s = eigen_split::<f64>(&a).unwrap();
        let l = (3.0 + 5f64.sqrt()) / 2.0;
        let expect = [l.powi(3), l, 1.0 / l, l.powi(-3)];
        for (x, e) in s.eigenvalues.iter().zip(expect) {
            assert!((x - e).abs() < 1e-12 * e.max(1.0));
        }
        assert!(s.residual < 1e-12);
        assert_eq!(s.unstable_dim(), 2);
    }

    #[test]
    fn inverse_round_trip() {
        let a = IntegerMatrix::cat().checked_pow(3).unwrap().direct_sum(&IntegerMatrix::cat());
        let inv = a.inverse_unimodular().unwrap();
        assert_eq!(a.checked_mul(&inv).unwrap(), IntegerMatrix::identity(4));
    }

    proptest! {
        #[test]
        fn automorphism_round_trip(xs in proptest::collection::vec(0.0f64..1.0, 4)) {
            let a = IntegerMatrix::cat().checked_pow(2).unwrap().direct_sum(&IntegerMatrix::cat());
            let t = ToralAutomorphism::<f64>::new(a).unwrap();
            let p = TorusPoint::new(xs);
            let q = t.apply_inverse(&t.apply(&p).unwrap()).unwrap();
            prop_assert!(p.distance(&q) < 1e-12);
        }

        #[test]
        fn splitting_residual_small(n in 1u32..8) {
            let a = IntegerMatrix::cat().checked_pow(n).unwrap();
            let s = eigen_split::<f64>(&a).unwrap();
            let scale = s.eigenvalues[0];
            prop_assert!(s.residual < 1e-14 * scale.max(1.0) * 16.0);
            let p = s.eigenvalues[0] * s.eigenvalues[1];
            prop_assert!((p - 1.0).abs() < 1e-12);
        }
    }
}
