//! The deformed system every subcommand starts from.

use crate::config::ExperimentConfig;
use crate::report::num;
use crate::CliError;
use phlab::bump::{compute_m, make_bump, BumpBound, BumpBoundSearch, SmoothBump};
use phlab::deformation::search::{search_params, DerivativeInequalities, EntropyCondition, SearchOutcome};
use phlab::deformation::{DeformationParams, DeformedSystem};

pub struct Construction {
    pub bump: SmoothBump<f64>,
    pub bound: BumpBound<f64>,
    /// `None` when the parameters were fixed in the configuration.
    pub search: Option<SearchOutcome<f64>>,
    pub params: DeformationParams<f64>,
    pub inequalities: DerivativeInequalities<f64>,
    pub entropy: EntropyCondition<f64>,
    pub system: DeformedSystem<f64>,
    /// The variant with hyperbolic fixed points.
    pub tilde: DeformedSystem<f64>,
}

impl Construction {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let sys_cfg = &cfg.system;
        let bump = make_bump(sys_cfg.delta)?;
        let bound = compute_m(&bump, &BumpBoundSearch::standard(&bump))?;
        let (params, search) = match (sys_cfg.n, sys_cfg.m, sys_cfg.k, sys_cfg.eps1) {
            (Some(n), Some(m), Some(k), Some(eps1)) => {
                (DeformationParams { n, m, delta: sys_cfg.delta, k, eps1, eps_tilde: 0.0 }, None)
            }
            _ => {
                let out = search_params(&bound, &cfg.search_caps())?;
                (out.params, Some(out))
            }
        };
        let system = DeformedSystem::new(params)?;
        let tilde = system.with_eps_tilde(sys_cfg.eps_tilde)?;
        let rates = system.rates();
        Ok(Self {
            inequalities: DerivativeInequalities::evaluate(&rates, bound.m),
            entropy: EntropyCondition::evaluate(params.eps1, rates.u),
            bump,
            bound,
            search,
            params,
            system,
            tilde,
        })
    }

    /// Resolved parameters for the report header.
    pub fn parameters(&self) -> Vec<(String, String)> {
        let r = self.system.rates();
        let p = &self.params;
        let mut out = vec![
            ("n".to_string(), p.n.to_string()),
            ("m".to_string(), p.m.to_string()),
            ("delta".to_string(), num(p.delta)),
            ("k".to_string(), num(p.k)),
            ("eps1".to_string(), num(p.eps1)),
            ("eps0".to_string(), num(p.eps0())),
            ("eps_tilde".to_string(), num(self.tilde.params().eps_tilde)),
            ("M".to_string(), num(self.bound.m)),
            ("lambda_uu".to_string(), num(r.uu)),
            ("lambda_ss".to_string(), num(r.ss)),
            ("lambda_u".to_string(), num(r.u)),
            ("lambda_s".to_string(), num(r.s)),
        ];
        out.push(("parameters_from".to_string(), if self.search.is_some() { "search" } else { "config" }.to_string()));
        out
    }
}
