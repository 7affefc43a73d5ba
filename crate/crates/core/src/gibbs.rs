//! Cesàro averages of pushed strong-unstable plaques as estimates of
//! Gibbs u-states.

use crate::cone::{extract_splitting, strong_unstable_direction, SplitSystem};
use crate::ergodic::SPLITTING_ITERATES;
use crate::error::{Error, Result};
use crate::map::{StrongUnstable, TorusMap};
use crate::rng;
use crate::scalar::{from_usize, lit, CompensatedSum, Real};
use crate::torus::TorusPoint;
use nalgebra::DVector;
use rayon::prelude::*;
use std::collections::{BTreeMap, HashMap};

/// Largest bin count stored densely.
const DENSE_LIMIT: usize = 1 << 22;
const PLAQUE_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct UnstablePlaque<T> {
    pub anchor: TorusPoint<T>,
    /// Unit vector along `F^uu(anchor)` in standard coordinates.
    pub direction: DVector<T>,
    pub half_length: T,
    pub samples: Vec<TorusPoint<T>>,
    /// Signed arclength parameter of each sample.
    pub parameters: Vec<T>,
}

/// Samples the segment `anchor + t * F^uu(anchor)`, `|t| <= half_length`,
/// with one jittered sample per stratum of equal length.
pub fn seed_plaque<T: Real, S: StrongUnstable<T> + ?Sized>(
    sys: &S,
    anchor: &TorusPoint<T>,
    half_length: T,
    sample_count: usize,
    seed: u64,
) -> Result<UnstablePlaque<T>> {
    if sample_count == 0 {
        return Err(Error::Precondition("plaque needs at least one sample".into()));
    }
    if half_length < T::zero() {
        return Err(Error::Precondition("half_length must be non-negative".into()));
    }
    let (dir, residual) = strong_unstable_direction(sys, anchor, SPLITTING_ITERATES)?;
    if residual > lit(PLAQUE_TOL) {
        return Err(Error::NotConverged(format!("strong-unstable direction residual {residual}")));
    }
    let direction = sys.frame() * dir;
    let mut r = rng::stream(seed, 0);
    let width = (half_length + half_length) / from_usize::<T>(sample_count);
    let parameters: Vec<T> = (0..sample_count)
        .map(|i| {
            if half_length == T::zero() {
                T::zero()
            } else {
                -half_length + width * (from_usize::<T>(i) + rng::uniform(&mut r, T::zero(), T::one()))
            }
        })
        .collect();
    let samples = parameters.iter().map(|&t| anchor.translate(&(&direction * t))).collect();
    Ok(UnstablePlaque { anchor: anchor.clone(), direction, half_length, samples, parameters })
}

/// Probability measure on a regular grid of the torus; bins are indexed
/// row-major with the first coordinate most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure<T> {
    bins: Vec<usize>,
    mass: BTreeMap<u64, T>,
}

fn bin_of<T: Real>(bins: &[usize], x: &TorusPoint<T>) -> u64 {
    let mut idx = 0u64;
    for (&c, &b) in x.coords().iter().zip(bins) {
        let i = (c * from_usize::<T>(b)).floor().to_usize().unwrap_or(0).min(b - 1);
        idx = idx * b as u64 + i as u64;
    }
    idx
}

impl<T: Real> EmpiricalMeasure<T> {
    fn check_bins(bins: &[usize]) -> Result<()> {
        if bins.is_empty() || bins.contains(&0) {
            return Err(Error::GridMismatch("every dimension needs at least one bin".into()));
        }
        if bins.iter().try_fold(1u64, |a, &b| a.checked_mul(b as u64)).is_none() {
            return Err(Error::GridMismatch("bin count overflows".into()));
        }
        Ok(())
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn cell_count(&self) -> u64 {
        self.bins.iter().map(|&b| b as u64).product()
    }

    pub fn uniform(bins: &[usize]) -> Result<Self> {
        Self::check_bins(bins)?;
        let n: u64 = bins.iter().map(|&b| b as u64).product();
        let w = T::one() / lit::<T>(n as f64);
        Ok(Self { bins: bins.to_vec(), mass: (0..n).map(|i| (i, w)).collect() })
    }

    pub fn atom(bins: &[usize], x: &TorusPoint<T>) -> Result<Self> {
        Self::check_bins(bins)?;
        if x.dim() != bins.len() {
            return Err(Error::DimensionMismatch { expected: bins.len(), found: x.dim() });
        }
        Ok(Self { bins: bins.to_vec(), mass: BTreeMap::from([(bin_of(bins, x), T::one())]) })
    }

    /// Equal-weight empirical measure of a point cloud.
    pub fn from_points(bins: &[usize], points: &[TorusPoint<T>]) -> Result<Self> {
        Self::check_bins(bins)?;
        let mut counts = Counts::new(bins);
        for p in points {
            counts.add(bin_of(bins, p), 1);
        }
        Ok(counts.into_measure(bins, points.len() as u64))
    }

    pub fn from_masses(bins: &[usize], mass: BTreeMap<u64, T>) -> Result<Self> {
        Self::check_bins(bins)?;
        let n: u64 = bins.iter().map(|&b| b as u64).product();
        if mass.keys().any(|&k| k >= n) || mass.values().any(|&m| m < T::zero()) {
            return Err(Error::GridMismatch("bin index out of range or negative mass".into()));
        }
        Ok(Self { bins: bins.to_vec(), mass })
    }

    pub fn total_mass(&self) -> T {
        let mut s = CompensatedSum::new();
        self.mass.values().for_each(|&m| s.add(m));
        s.value()
    }

    /// Multi-index of a flat bin index.
    pub fn multi_index(&self, mut flat: u64) -> Vec<usize> {
        let mut out = vec![0; self.bins.len()];
        for (slot, &b) in out.iter_mut().zip(&self.bins).rev() {
            *slot = (flat % b as u64) as usize;
            flat /= b as u64;
        }
        out
    }

    pub fn mass_of(&self, flat: u64) -> T {
        self.mass.get(&flat).copied().unwrap_or_else(T::zero)
    }

    /// Occupied bins as `(multi-index, mass)` in index order.
    pub fn cells(&self) -> Vec<(Vec<usize>, T)> {
        self.mass.iter().map(|(&k, &m)| (self.multi_index(k), m)).collect()
    }

    /// Total mass of bins whose multi-index satisfies `pred`.
    pub fn mass_where(&self, pred: impl Fn(&[usize]) -> bool) -> T {
        let mut s = CompensatedSum::new();
        for (&k, &m) in &self.mass {
            if pred(&self.multi_index(k)) {
                s.add(m);
            }
        }
        s.value()
    }

    /// Marginal on the first `dims` coordinates.
    pub fn marginal(&self, dims: usize) -> Result<Self> {
        if dims == 0 || dims > self.bins.len() {
            return Err(Error::GridMismatch(format!(
                "marginal over {dims} leading dimensions of a {}-dimensional grid",
                self.bins.len()
            )));
        }
        let trailing: u64 = self.bins[dims..].iter().map(|&b| b as u64).product();
        let mut sums: BTreeMap<u64, CompensatedSum<T>> = BTreeMap::new();
        for (&k, &m) in &self.mass {
            sums.entry(k / trailing).or_default().add(m);
        }
        Ok(Self { bins: self.bins[..dims].to_vec(), mass: sums.into_iter().map(|(k, s)| (k, s.value())).collect() })
    }

    /// Marginal on the trailing coordinates starting at `from`.
    pub fn trailing_marginal(&self, from: usize) -> Result<Self> {
        if from >= self.bins.len() {
            return Err(Error::GridMismatch("empty trailing marginal".into()));
        }
        let trailing: u64 = self.bins[from..].iter().map(|&b| b as u64).product();
        let mut sums: BTreeMap<u64, CompensatedSum<T>> = BTreeMap::new();
        for (&k, &m) in &self.mass {
            sums.entry(k % trailing).or_default().add(m);
        }
        Ok(Self { bins: self.bins[from..].to_vec(), mass: sums.into_iter().map(|(k, s)| (k, s.value())).collect() })
    }

    /// `self ⊗ other` on the concatenated grid.
    pub fn product(&self, other: &Self) -> Self {
        let n2: u64 = other.cell_count();
        let mut mass = BTreeMap::new();
        for (&a, &ma) in &self.mass {
            for (&b, &mb) in &other.mass {
                mass.insert(a * n2 + b, ma * mb);
            }
        }
        let mut bins = self.bins.clone();
        bins.extend_from_slice(&other.bins);
        Self { bins, mass }
    }
}

/// The base marginal of a measure: first `base_dims` coordinates.
pub fn pushforward_base<T: Real>(m: &EmpiricalMeasure<T>, base_dims: usize) -> Result<EmpiricalMeasure<T>> {
    m.marginal(base_dims)
}

/// `(1/2) sum |m1 - m2|` over bins.
pub fn total_variation<T: Real>(m1: &EmpiricalMeasure<T>, m2: &EmpiricalMeasure<T>) -> Result<T> {
    if m1.bins != m2.bins {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", m1.bins, m2.bins)));
    }
    let mut s = CompensatedSum::new();
    for (k, &a) in &m1.mass {
        s.add((a - m2.mass_of(*k)).abs());
    }
    for (k, &b) in &m2.mass {
        if !m1.mass.contains_key(k) {
            s.add(b.abs());
        }
    }
    Ok(s.value() * lit(0.5))
}

/// Bin counts, dense for small grids and hashed otherwise.
#[derive(Clone, Debug)]
enum Counts {
    Dense(Vec<u64>),
    Sparse(HashMap<u64, u64>),
}

impl Counts {
    fn new(bins: &[usize]) -> Self {
        let n: u64 = bins.iter().map(|&b| b as u64).product();
        if n as usize <= DENSE_LIMIT {
            Counts::Dense(vec![0; n as usize])
        } else {
            Counts::Sparse(HashMap::new())
        }
    }

    fn add(&mut self, idx: u64, c: u64) {
        match self {
            Counts::Dense(v) => v[idx as usize] += c,
            Counts::Sparse(m) => *m.entry(idx).or_insert(0) += c,
        }
    }

    fn merge(&mut self, other: &Counts) {
        match other {
            Counts::Dense(v) => v.iter().enumerate().filter(|(_, &c)| c > 0).for_each(|(i, &c)| self.add(i as u64, c)),
            Counts::Sparse(m) => m.iter().for_each(|(&i, &c)| self.add(i, c)),
        }
    }

    fn into_measure<T: Real>(self, bins: &[usize], total: u64) -> EmpiricalMeasure<T> {
        let t = lit::<T>(total as f64);
        let mass = match self {
            Counts::Dense(v) => v
                .into_iter()
                .enumerate()
                .filter(|(_, c)| *c > 0)
                .map(|(i, c)| (i as u64, lit::<T>(c as f64) / t))
                .collect(),
            Counts::Sparse(m) => m.into_iter().map(|(i, c)| (i, lit::<T>(c as f64) / t)).collect(),
        };
        EmpiricalMeasure { bins: bins.to_vec(), mass }
    }
}

/// Running Cesàro average of the step-wise empirical measures of a pushed
/// point cloud.
#[derive(Clone, Debug)]
pub struct CesaroState<T> {
    bins: Vec<usize>,
    counts: Counts,
    first: Counts,
    steps: usize,
    samples: Vec<TorusPoint<T>>,
}

impl<T: Real> CesaroState<T> {
    pub fn new(plaque: &UnstablePlaque<T>, bins: &[usize]) -> Result<Self> {
        EmpiricalMeasure::<T>::check_bins(bins)?;
        if plaque.samples.first().map(|p| p.dim()) != Some(bins.len()) {
            return Err(Error::DimensionMismatch {
                expected: bins.len(),
                found: plaque.samples.first().map_or(0, |p| p.dim()),
            });
        }
        let mut first = Counts::new(bins);
        for p in &plaque.samples {
            first.add(bin_of(bins, p), 1);
        }
        Ok(Self { bins: bins.to_vec(), counts: Counts::new(bins), first, steps: 0, samples: plaque.samples.clone() })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn samples(&self) -> &[TorusPoint<T>] {
        &self.samples
    }

    /// Bins the current cloud and pushes it forward, `n` times.
    pub fn advance<S: TorusMap<T> + ?Sized>(&mut self, sys: &S, n: usize) -> Result<()> {
        let bins = &self.bins;
        let chunk = self.samples.len().div_ceil(rayon::current_num_threads().max(1) * 4).max(1);
        let partial: Vec<Counts> = self
            .samples
            .par_chunks_mut(chunk)
            .map(|pts| -> Result<Counts> {
                let mut c = Counts::new(bins);
                for p in pts.iter_mut() {
                    for _ in 0..n {
                        c.add(bin_of(bins, p), 1);
                        *p = sys.apply(p)?;
                    }
                }
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()?;
        for c in &partial {
            self.counts.merge(c);
        }
        self.steps += n;
        Ok(())
    }

    /// `(1/n) sum_{j<n} (f^j)_* nu`.
    pub fn measure(&self) -> EmpiricalMeasure<T> {
        let total = (self.steps as u64) * self.samples.len() as u64;
        self.counts.clone().into_measure(&self.bins, total.max(1))
    }

    /// `TV(f_* mu_n, mu_n)`, which equals `TV(nu_n, nu_0) / n` for the
    /// step-wise measures `nu_j`.
    pub fn invariance_defect(&self) -> T {
        let n = self.samples.len() as u64;
        let first = self.first.clone().into_measure::<T>(&self.bins, n);
        let last = EmpiricalMeasure::from_points(&self.bins, &self.samples).expect("grid already validated");
        total_variation(&first, &last).unwrap_or_else(|_| T::one()) / from_usize::<T>(self.steps.max(1))
    }
}

/// Cesàro estimate after `n_steps` pushes.
pub fn cesaro_push<T: Real, S: TorusMap<T> + ?Sized>(
    sys: &S,
    plaque: &UnstablePlaque<T>,
    n_steps: usize,
    bins: &[usize],
) -> Result<EmpiricalMeasure<T>> {
    if n_steps == 0 {
        return Err(Error::Precondition("n_steps must be at least 1".into()));
    }
    let mut st = CesaroState::new(plaque, bins)?;
    st.advance(sys, n_steps)?;
    Ok(st.measure())
}

/// Integrals against the Cesàro measure `mu_n` of the plaque.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CesaroIntegrals<T> {
    /// `∫ log |Df|_{F^cu}| d mu_n`.
    pub cu_log_growth: T,
    /// `∫ log |Df^{-1}|_{F^cs}| d mu_n`.
    pub cs_inverse_log_growth: T,
    /// `mu_n(slab)`.
    pub slab_mass: T,
    /// Samples whose splitting extraction did not converge.
    pub unconverged: usize,
}

/// Integrates the center log-Jacobians and a slab indicator against the
/// Cesàro measure by transporting `F^cu` forward and `F^cs` backward along
/// each sample's orbit.
pub fn cesaro_integrals<T: Real, S: SplitSystem<T> + ?Sized>(
    sys: &S,
    plaque: &UnstablePlaque<T>,
    n_steps: usize,
    slab: &(dyn Fn(&TorusPoint<T>) -> bool + Sync),
) -> Result<CesaroIntegrals<T>> {
    if n_steps == 0 {
        return Err(Error::Precondition("n_steps must be at least 1".into()));
    }
    let ax = sys.bundle_axes();
    let plane = |v: DVector<T>| -> DVector<T> { &ax.cu * ax.cu.dot(&v) + &ax.cs * ax.cs.dot(&v) };
    let tol = lit::<T>(1e-8);
    type Partial<T> = (CompensatedSum<T>, CompensatedSum<T>, u64, usize);
    let per_sample: Vec<Partial<T>> = plaque
        .samples
        .par_iter()
        .map(|x0| -> Result<Partial<T>> {
            let mut orbit = Vec::with_capacity(n_steps + 2);
            orbit.push(sys.apply_inverse(x0)?);
            orbit.push(x0.clone());
            for j in 0..n_steps {
                let next = sys.apply(&orbit[j + 1])?;
                orbit.push(next);
            }
            // orbit[j + 1] = f^j(x0), j = -1..=n_steps.
            let mut unconverged = 0;
            let start = extract_splitting(sys, x0, SPLITTING_ITERATES, tol)?;
            let end = extract_splitting(sys, &orbit[n_steps + 1], SPLITTING_ITERATES, tol)?;
            unconverged += usize::from(!start.converged) + usize::from(!end.converged);
            let mut cu = CompensatedSum::new();
            let mut v = start.cu;
            let mut hits = 0u64;
            for j in 0..n_steps {
                let x = &orbit[j + 1];
                if slab(x) {
                    hits += 1;
                }
                let w = plane(sys.jacobian(x)? * &v);
                let g = w.norm();
                cu.add(g.ln());
                v = w / g;
            }
            let mut cs = CompensatedSum::new();
            let mut v = end.cs;
            for j in (0..=n_steps).rev() {
                // Df^{-1} at f^j(x0) = Df(f^{j-1} x0)^{-1}.
                let w = plane(sys.jacobian_inverse_at_preimage(&orbit[j])? * &v);
                let g = w.norm();
                if j < n_steps {
                    cs.add(g.ln());
                }
                v = w / g;
            }
            Ok((cu, cs, hits, unconverged))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cu = CompensatedSum::new();
    let mut cs = CompensatedSum::new();
    let mut hits = 0u64;
    let mut unconverged = 0;
    for (a, b, h, u) in &per_sample {
        cu.merge(a);
        cs.merge(b);
        hits += h;
        unconverged += u;
    }
    let total = lit::<T>((n_steps * plaque.samples.len()) as f64);
    Ok(CesaroIntegrals {
        cu_log_growth: cu.value() / total,
        cs_inverse_log_growth: cs.value() / total,
        slab_mass: lit::<T>(hits as f64) / total,
        unconverged,
    })
}

/// Kolmogorov-Smirnov distance between the empirical law of `values` and
/// the uniform law on `[0, 1]`.
pub fn ks_uniform<T: Real>(values: &[T]) -> T {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = from_usize::<T>(v.len());
    v.iter().enumerate().fold(T::zero(), |d, (i, &x)| {
        let lo = from_usize::<T>(i) / n;
        let hi = from_usize::<T>(i + 1) / n;
        d.max((x - lo).abs()).max((hi - x).abs())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::{compute_m, make_bump, BumpBoundSearch};
    use crate::deformation::search::{search_params, SearchCaps};
    use crate::deformation::{Chart, DeformedSystem};
    use crate::torus::wrap_centered;
    use crate::torus_linear::{IntegerMatrix, ToralAutomorphism};
    use proptest::prelude::*;

    fn cat() -> ToralAutomorphism<f64> {
        ToralAutomorphism::new(IntegerMatrix::cat()).unwrap()
    }

    fn deformed() -> DeformedSystem<f64> {
        let b = make_bump(1.0f64 / 40.0).unwrap();
        let bound = compute_m(&b, &BumpBoundSearch::standard(&b)).unwrap();
        DeformedSystem::new(search_params(&bound, &SearchCaps::default()).unwrap().params).unwrap()
    }

    #[test]
    fn plaque_lies_on_the_eigenline() {
        let a = cat();
        let pl = seed_plaque(&a, &TorusPoint::origin(2), 0.2, 500, 1).unwrap();
        let e = &a.splitting().eigenvectors[0];
        assert!((pl.direction.normalize().dot(e).abs() - 1.0).abs() < 1e-12);
        for (x, &t) in pl.samples.iter().zip(&pl.parameters) {
            let expect =
                TorusPoint::new(vec![t * e[0] * pl.direction.dot(e).signum(), t * e[1] * pl.direction.dot(e).signum()]);
            assert!(x.distance(&expect) < 1e-12);
        }
    }

    #[test]
    fn degenerate_plaque_is_an_atom() {
        let a = cat();
        let anchor = TorusPoint::new(vec![0.3, 0.6]);
        let pl = seed_plaque(&a, &anchor, 0.0, 10, 1).unwrap();
        assert!(pl.samples.iter().all(|x| *x == anchor));
        assert!(seed_plaque(&a, &anchor, -1.0, 10, 1).is_err());
        assert!(seed_plaque(&a, &anchor, 0.1, 0, 1).is_err());
    }

    #[test]
    fn base_projection_is_uniform_on_the_segment() {
        // Oracle: recover each sample's position along the segment from its
        // coordinates alone and run a KS test against the uniform law.
        let sys = deformed();
        let anchor = TorusPoint::new(vec![0.37, 0.21, 0.66, 0.05]);
        let l = 0.1;
        let pl = seed_plaque(&sys, &anchor, l, 10_000, 3).unwrap();
        let base_dir = pl.direction.rows(0, 2).into_owned();
        let scale = base_dir.norm_squared();
        let u: Vec<f64> = pl
            .samples
            .iter()
            .map(|x| {
                let w = [
                    wrap_centered(x.coords()[0] - anchor.coords()[0]),
                    wrap_centered(x.coords()[1] - anchor.coords()[1]),
                ];
                let t = (w[0] * base_dir[0] + w[1] * base_dir[1]) / scale;
                (t + l) / (2.0 * l)
            })
            .collect();
        assert!(ks_uniform(&u) < 0.02);
    }

    #[test]
    fn atom_at_fixed_point_stays_put() {
        let sys = deformed();
        let p = sys.fixed_point(Chart::P).clone();
        let pl = seed_plaque(&sys, &p, 0.0, 4, 0).unwrap();
        let m = cesaro_push(&sys, &pl, 1, &[16; 4]).unwrap();
        assert_eq!(m, EmpiricalMeasure::atom(&[16; 4], &p).unwrap());
        assert_eq!(pushforward_base(&m, 2).unwrap(), EmpiricalMeasure::atom(&[16; 2], &TorusPoint::origin(2)).unwrap());
    }

    #[test]
    fn cat_map_plaque_equidistributes() {
        let a = cat();
        let pl = seed_plaque(&a, &TorusPoint::new(vec![0.1, 0.4]), 0.05, 10_000, 2).unwrap();
        let m = cesaro_push(&a, &pl, 2000, &[32, 32]).unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
        let tv = total_variation(&m, &EmpiricalMeasure::uniform(&[32, 32]).unwrap()).unwrap();
        assert!(tv < 0.05, "tv {tv}");
    }

    #[test]
    fn cesaro_stabilizes_and_is_nearly_invariant() {
        let a = cat();
        let pl = seed_plaque(&a, &TorusPoint::new(vec![0.1, 0.4]), 0.05, 2000, 2).unwrap();
        let u = EmpiricalMeasure::uniform(&[32, 32]).unwrap();
        let mut st = CesaroState::new(&pl, &[32, 32]).unwrap();
        st.advance(&a, 250).unwrap();
        let tv1 = total_variation(&st.measure(), &u).unwrap();
        st.advance(&a, 250).unwrap();
        let tv2 = total_variation(&st.measure(), &u).unwrap();
        assert!(tv2 < tv1);
        assert!(st.invariance_defect() < 0.05);
    }

    #[test]
    fn deformed_cesaro_estimate() {
        let sys = deformed();
        let pl = seed_plaque(&sys, &TorusPoint::new(vec![0.3, 0.7, 0.2, 0.9]), 0.05, 2000, 4).unwrap();
        let m = cesaro_push(&sys, &pl, 500, &[16; 4]).unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
        let base = pushforward_base(&m, 2).unwrap();
        assert!(total_variation(&base, &EmpiricalMeasure::uniform(&[16, 16]).unwrap()).unwrap() < 0.05);
        let h = sys.box_half_width();
        let slab = |x: &TorusPoint<f64>| {
            let y = sys.chart_coords(Chart::P, x);
            y[0].abs() <= h && y[1].abs() <= h
        };
        let ints = cesaro_integrals(&sys, &pl, 500, &slab).unwrap();
        assert!(ints.cu_log_growth > 0.0 && ints.cs_inverse_log_growth > 0.0);
        assert!(ints.slab_mass <= 0.03);
        assert_eq!(ints.unconverged, 0);
    }

    #[test]
    fn total_variation_closed_forms() {
        let bins = [4, 4];
        let u = EmpiricalMeasure::<f64>::uniform(&bins).unwrap();
        assert_eq!(total_variation(&u, &u).unwrap(), 0.0);
        let a = EmpiricalMeasure::atom(&bins, &TorusPoint::new(vec![0.1, 0.1])).unwrap();
        let b = EmpiricalMeasure::atom(&bins, &TorusPoint::new(vec![0.9, 0.9])).unwrap();
        assert_eq!(total_variation(&a, &b).unwrap(), 1.0);
        // Half uniform, half on bin 0: TV to uniform = 1/2 (1 - 1/16).
        let mut mass = BTreeMap::new();
        for i in 0..16u64 {
            mass.insert(i, 0.5 / 16.0 + if i == 0 { 0.5 } else { 0.0 });
        }
        let h = EmpiricalMeasure::from_masses(&bins, mass).unwrap();
        assert!((total_variation(&h, &u).unwrap() - 0.5 * (1.0 - 1.0 / 16.0)).abs() < 1e-15);
        let other = EmpiricalMeasure::<f64>::uniform(&[4, 8]).unwrap();
        assert!(matches!(total_variation(&u, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn product_marginals() {
        let u = EmpiricalMeasure::<f64>::uniform(&[8, 8]).unwrap();
        let a = EmpiricalMeasure::atom(&[4, 4], &TorusPoint::new(vec![0.5, 0.2])).unwrap();
        let p = u.product(&a);
        assert_eq!(p.marginal(2).unwrap(), u);
        assert_eq!(p.trailing_marginal(2).unwrap(), a);
        assert!((p.total_mass() - 1.0).abs() < 1e-12);
        assert!(p.marginal(5).is_err());
    }

    proptest! {
        #[test]
        fn marginals_conserve_mass(pts in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 1..200)) {
            let pts: Vec<TorusPoint<f64>> = pts.into_iter().map(TorusPoint::new).collect();
            let m = EmpiricalMeasure::from_points(&[5, 3, 7], &pts).unwrap();
            prop_assert!((m.total_mass() - 1.0).abs() < 1e-12);
            prop_assert!((m.marginal(1).unwrap().total_mass() - 1.0).abs() < 1e-12);
            prop_assert!((m.marginal(2).unwrap().total_mass() - 1.0).abs() < 1e-12);
            let tv = total_variation(&m, &EmpiricalMeasure::uniform(&[5, 3, 7]).unwrap()).unwrap();
            prop_assert!((0.0..=1.0).contains(&tv));
        }
    }
}
