//! Automatic choice of `(n, m, eps1, k)`.

use super::{Chart, DeformationParams, DeformedSystem, Rates};
use crate::bump::{make_bump, BumpBound};
use crate::cone::{program_summary, verify_cone_program};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::torus_linear::{eigen_split, IntegerMatrix};

#[derive(Clone, Debug)]
pub struct SearchCaps<T> {
    /// Largest `n` tried; `m` ranges over `1..n`.
    pub n_max: u32,
    pub delta: T,
    /// Tried in order; the first satisfying the entropy condition wins.
    pub eps1_candidates: Vec<T>,
    /// Largest `eps_tilde` the chosen `k` must also accommodate.
    pub eps_tilde: T,
    pub k_start: T,
    pub k_growth: T,
    pub k_max: T,
    /// Required margin `theta <= theta_max` in the sampled cone check.
    pub theta_max: T,
    pub grid_nodes: usize,
    pub cone_points: usize,
    pub cone_vectors: usize,
    pub seed: u64,
}

impl<T: Real> Default for SearchCaps<T> {
    fn default() -> Self {
        Self {
            n_max: 12,
            delta: lit(1.0 / 40.0),
            eps1_candidates: vec![lit(0.1), lit(0.05), lit(0.02), lit(0.01)],
            eps_tilde: lit(0.1),
            k_start: T::one(),
            k_growth: lit(1.25),
            k_max: lit(1e6),
            theta_max: lit(0.95),
            grid_nodes: 11,
            cone_points: 600,
            cone_vectors: 4,
            seed: 0x5eed,
        }
    }
}

/// Both sides of the two derivative inequalities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeInequalities<T> {
    /// `M (lambda_u - 1) + lambda_u` and `lambda_uu / 2`.
    pub unstable: (T, T),
    /// `M (1 / lambda_s - 1) + 1 / lambda_s` and `1 / (2 lambda_ss)`.
    pub stable: (T, T),
}

impl<T: Real> DerivativeInequalities<T> {
    pub fn evaluate(rates: &Rates<T>, m_bound: T) -> Self {
        let one = T::one();
        let two: T = lit(2.0);
        Self {
            unstable: (m_bound * (rates.u - one) + rates.u, rates.uu / two),
            stable: (m_bound * (one / rates.s - one) + one / rates.s, one / (two * rates.ss)),
        }
    }

    pub fn hold(&self) -> bool {
        self.unstable.0 <= self.unstable.1 && self.stable.0 <= self.stable.1
    }
}

/// The entropy condition on `eps1`: the weighted log-average is positive
/// and the two rates straddle 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyCondition<T> {
    pub weighted_log: T,
    pub lower_rate: T,
    pub upper_rate: T,
}

impl<T: Real> EntropyCondition<T> {
    pub fn evaluate(eps1: T, lambda_u: T) -> Self {
        let one = T::one();
        let norm = (one + eps1 * eps1).sqrt();
        let lower = (one - eps1).sqrt() / norm;
        let upper = lambda_u / norm;
        Self {
            weighted_log: lit::<T>(0.1) * lower.ln() + lit::<T>(0.9) * upper.ln(),
            lower_rate: lower,
            upper_rate: upper,
        }
    }

    pub fn holds(&self) -> bool {
        self.weighted_log > T::zero() && self.lower_rate < T::one() && T::one() < self.upper_rate
    }
}

#[derive(Clone, Debug)]
pub struct SearchOutcome<T> {
    pub params: DeformationParams<T>,
    pub m_bound: T,
    pub inequalities: DerivativeInequalities<T>,
    pub entropy_condition: EntropyCondition<T>,
    pub eps0: T,
    /// Analytic upper bound on the off-diagonal partials at the chosen `k`.
    pub small_partial_bound: T,
    /// Largest off-diagonal partial found on the slab grids.
    pub small_partial_grid: T,
    /// Largest sampled cone contraction ratio.
    pub cone_theta: T,
    pub k_trials: usize,
}

fn rates_for<T: Real>(n: u32, m: u32) -> Result<Rates<T>> {
    let dn = eigen_split::<T>(&IntegerMatrix::cat().checked_pow(n)?)?;
    let dm = eigen_split::<T>(&IntegerMatrix::cat().checked_pow(m)?)?;
    Ok(Rates { uu: dn.eigenvalues[0], ss: dn.eigenvalues[1], u: dm.eigenvalues[0], s: dm.eigenvalues[1] })
}

/// Smallest `(n, m)` (ordered by `n`, then `m`), first admissible `eps1`,
/// then the first `k` on the geometric ladder for which the off-diagonal
/// partials drop below `eps0` and the sampled cone program passes with
/// margin.
pub fn search_params<T: Real>(bound: &BumpBound<T>, caps: &SearchCaps<T>) -> Result<SearchOutcome<T>> {
    let bump = make_bump(caps.delta)?;
    let mut chosen = None;
    'outer: for n in 2..=caps.n_max {
        for m in 1..n {
            let rates = rates_for::<T>(n, m)?;
            let ineq = DerivativeInequalities::evaluate(&rates, bound.m);
            if ineq.hold() {
                chosen = Some((n, m, rates, ineq));
                break 'outer;
            }
        }
    }
    let (n, m, rates, inequalities) = chosen.ok_or_else(|| {
        Error::Infeasible(format!("no n <= {} satisfies the derivative inequalities with M = {}", caps.n_max, bound.m))
    })?;
    let (eps1, entropy_condition) = caps
        .eps1_candidates
        .iter()
        .map(|&e| (e, EntropyCondition::evaluate(e, rates.u)))
        .find(|(_, c)| c.holds())
        .ok_or_else(|| Error::Infeasible("no eps1 candidate satisfies the entropy condition".into()))?;
    let eps0 = (eps1 / lit(10.0)).min(lit(0.05));

    // |P_a| <= |kappa| sup|c s(kc)| sup|s'| = |kappa| sup|y s(y)| sup|s'| / k.
    let kappa = rates.u - T::one() + caps.eps_tilde;
    let c_bound = kappa * bump.sup_y_s() * bump.sup_derivative();

    let mut k = caps.k_start;
    let mut trials = 0;
    while k <= caps.k_max {
        trials += 1;
        let eta = c_bound / k;
        if eta < eps0 {
            let params = DeformationParams { n, m, delta: caps.delta, k, eps1, eps_tilde: T::zero() };
            let sys = DeformedSystem::new(params)?;
            let tilde = sys.with_eps_tilde(caps.eps_tilde)?;
            let grid_sup = [&sys, &tilde]
                .iter()
                .flat_map(|s| {
                    [Chart::P, Chart::Q].map(|ch| s.splitting_bounds(ch, &s.slab_grid(ch, caps.grid_nodes)).max_small)
                })
                .fold(T::zero(), |a, b| a.max(b));
            if grid_sup < eps0 {
                let points = sys.stress_points(caps.cone_points, caps.seed);
                let results = verify_cone_program(&sys, eps0, &points, caps.cone_vectors, caps.seed)?;
                let (theta, _, violations) = program_summary(&results);
                if violations == 0 && results.iter().all(|r| r.passed) && theta <= caps.theta_max {
                    return Ok(SearchOutcome {
                        params,
                        m_bound: bound.m,
                        inequalities,
                        entropy_condition,
                        eps0,
                        small_partial_bound: eta,
                        small_partial_grid: grid_sup,
                        cone_theta: theta,
                        k_trials: trials,
                    });
                }
            }
        }
        k *= caps.k_growth;
    }
    Err(Error::Infeasible(format!("no k <= {} passed the partial-derivative and cone checks", caps.k_max)))
}
