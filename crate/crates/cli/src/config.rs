//! Experiment configuration: one TOML file, every section optional.

use crate::CliError;
use phlab::deformation::search::SearchCaps;
use phlab::torus_linear::{IntegerMatrix, ToralAutomorphism};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub output_dir: PathBuf,
    pub system: SystemConfig,
    pub search: SearchConfig,
    pub construction: ConstructionConfig,
    pub cones: ConesConfig,
    pub lyapunov: LyapunovConfig,
    pub gibbs: GibbsConfig,
    pub skeleton: SkeletonConfig,
    pub product: ProductConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            workers: 0,
            output_dir: PathBuf::from("phlab-out"),
            system: SystemConfig::default(),
            search: SearchConfig::default(),
            construction: ConstructionConfig::default(),
            cones: ConesConfig::default(),
            lyapunov: LyapunovConfig::default(),
            gibbs: GibbsConfig::default(),
            skeleton: SkeletonConfig::default(),
            product: ProductConfig::default(),
        }
    }
}

/// The deformed map. Parameters left out are chosen by the search.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub delta: f64,
    /// Strength of the variant with hyperbolic fixed points.
    pub eps_tilde: f64,
    pub n: Option<u32>,
    pub m: Option<u32>,
    pub k: Option<f64>,
    pub eps1: Option<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self { delta: 1.0 / 40.0, eps_tilde: 0.1, n: None, m: None, k: None, eps1: None }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub n_max: u32,
    pub eps1_candidates: Vec<f64>,
    pub k_start: f64,
    pub k_growth: f64,
    pub k_max: f64,
    pub theta_max: f64,
    pub grid_nodes: usize,
    pub cone_points: usize,
    pub cone_vectors: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let c = SearchCaps::<f64>::default();
        Self {
            n_max: c.n_max,
            eps1_candidates: c.eps1_candidates,
            k_start: c.k_start,
            k_growth: c.k_growth,
            k_max: c.k_max,
            theta_max: c.theta_max,
            grid_nodes: c.grid_nodes,
            cone_points: c.cone_points,
            cone_vectors: c.cone_vectors,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructionConfig {
    pub bump_samples: usize,
    pub grid_nodes: usize,
    pub random_points: usize,
    pub roundtrip_points: usize,
    pub chart_interior_points: usize,
    pub jacobian_points: usize,
}

impl Default for ConstructionConfig {
    fn default() -> Self {
        Self {
            bump_samples: 1000,
            grid_nodes: 21,
            random_points: 100_000,
            roundtrip_points: 10_000,
            chart_interior_points: 1000,
            jacobian_points: 1000,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ConesConfig {
    pub points: usize,
    pub vectors_per_point: usize,
    /// Cone width; defaults to the small-partial bound `eps0`.
    pub width: Option<f64>,
}

impl Default for ConesConfig {
    fn default() -> Self {
        Self { points: 2500, vectors_per_point: 4, width: None }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    pub orbits: usize,
    pub length: usize,
    pub transient: usize,
    /// Orbits that must show the expected signs.
    pub min_agreeing: usize,
    pub fixed_point_length: usize,
    pub fixed_point_tolerance: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            orbits: 100,
            length: 100_000,
            transient: 1000,
            min_agreeing: 99,
            fixed_point_length: 5000,
            fixed_point_tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    pub anchor: Vec<f64>,
    pub half_length: f64,
    pub plaque_samples: usize,
    pub steps: usize,
    pub bins: usize,
    pub tv_tolerance: f64,
    pub integral_samples: usize,
    pub integral_steps: usize,
    pub slab_bound: f64,
    pub slab_tolerance: f64,
    pub orbits: usize,
    pub orbit_length: usize,
    pub transient: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            anchor: vec![0.3, 0.7, 0.2, 0.9],
            half_length: 0.05,
            plaque_samples: 10_000,
            steps: 2000,
            bins: 16,
            tv_tolerance: 0.05,
            integral_samples: 500,
            integral_steps: 1000,
            slab_bound: 0.01,
            slab_tolerance: 0.02,
            orbits: 20,
            orbit_length: 20_000,
            transient: 500,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SkeletonConfig {
    /// Row-major integer matrix of the census map.
    pub matrix: Vec<Vec<i64>>,
    pub max_period: u32,
    /// Jitter added to each lattice guess before Newton.
    pub guess_jitter: f64,
    pub newton_iterations: usize,
    pub newton_tolerance: f64,
    /// Periods whose points enter the skeleton extraction.
    pub skeleton_max_period: u32,
    pub arc_length: f64,
    pub resolution: f64,
    pub intersection_tolerance: f64,
    pub dump_arcs: bool,
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        Self {
            matrix: vec![vec![2, 1], vec![1, 1]],
            max_period: 5,
            guess_jitter: 1e-4,
            newton_iterations: 30,
            newton_tolerance: 1e-12,
            skeleton_max_period: 2,
            arc_length: 2.0,
            resolution: 1e-2,
            intersection_tolerance: 1e-4,
            dump_arcs: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    Linear,
    Circle,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProductConfig {
    pub base: BaseKind,
    pub base_matrix: Vec<Vec<i64>>,
    pub fiber_matrix: Vec<Vec<i64>>,
    pub attractors: usize,
    pub circle_eps: f64,
    pub diagram_points: usize,
    pub spectrum_length: usize,
    pub linear_orbit_length: usize,
    pub deformed_orbit_length: usize,
    pub deformed_tolerance: f64,
    pub cesaro_samples: usize,
    pub cesaro_steps: usize,
    pub bins: usize,
    pub fiber_seeds: Vec<Vec<f64>>,
}

impl Default for ProductConfig {
    fn default() -> Self {
        Self {
            base: BaseKind::Linear,
            base_matrix: vec![vec![5, 3], vec![3, 2]],
            fiber_matrix: vec![vec![2, 1], vec![1, 1]],
            attractors: 3,
            circle_eps: 0.2,
            diagram_points: 10_000,
            spectrum_length: 1200,
            linear_orbit_length: 2000,
            deformed_orbit_length: 100_000,
            deformed_tolerance: 0.01,
            cesaro_samples: 400,
            cesaro_steps: 200,
            bins: 8,
            fiber_seeds: vec![vec![0.0, 0.0], vec![0.2, 0.4]],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Usage(format!("config field `{}`: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn search_caps(&self) -> SearchCaps<f64> {
        let s = &self.search;
        SearchCaps {
            n_max: s.n_max,
            delta: self.system.delta,
            eps1_candidates: s.eps1_candidates.clone(),
            eps_tilde: self.system.eps_tilde,
            k_start: s.k_start,
            k_growth: s.k_growth,
            k_max: s.k_max,
            theta_max: s.theta_max,
            grid_nodes: s.grid_nodes,
            cone_points: s.cone_points,
            cone_vectors: s.cone_vectors,
            seed: self.seed,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let usage = |field: &str, msg: &str| Err(CliError::Usage(format!("config field `{field}`: {msg}")));
        let sys = &self.system;
        if !(sys.delta > 0.0 && sys.delta.is_finite()) {
            return usage("system.delta", "must be positive");
        }
        if !(0.0..1.0).contains(&sys.eps_tilde) {
            return usage("system.eps_tilde", "must lie in [0, 1)");
        }
        let explicit = [sys.n.is_some(), sys.m.is_some(), sys.k.is_some(), sys.eps1.is_some()];
        if explicit.iter().any(|&b| b) && !explicit.iter().all(|&b| b) {
            return usage("system", "give all of n, m, k, eps1 or none of them");
        }
        if self.search.k_growth <= 1.0 {
            return usage("search.k_growth", "must exceed 1");
        }
        if self.search.eps1_candidates.is_empty() {
            return usage("search.eps1_candidates", "must not be empty");
        }
        if self.gibbs.anchor.len() != 4 {
            return usage("gibbs.anchor", "needs four coordinates");
        }
        if self.gibbs.bins == 0 || self.product.bins == 0 {
            return usage("bins", "must be positive");
        }
        if self.lyapunov.length <= self.lyapunov.transient {
            return usage("lyapunov.length", "must exceed the transient");
        }
        if self.gibbs.orbit_length <= self.gibbs.transient {
            return usage("gibbs.orbit_length", "must exceed the transient");
        }
        if self.lyapunov.min_agreeing > self.lyapunov.orbits {
            return usage("lyapunov.min_agreeing", "cannot exceed the number of orbits");
        }
        if !(self.skeleton.resolution > 0.0 && self.skeleton.resolution < 0.25) {
            return usage("skeleton.resolution", "must lie in (0, 1/4)");
        }
        if self.skeleton.max_period == 0 {
            return usage("skeleton.max_period", "must be at least 1");
        }
        parse_matrix("skeleton.matrix", &self.skeleton.matrix)?;
        let base = parse_matrix("product.base_matrix", &self.product.base_matrix)?;
        if base.matrix().dim() != 2 {
            return usage("product.base_matrix", "must be 2x2");
        }
        parse_matrix("product.fiber_matrix", &self.product.fiber_matrix)?;
        if self.product.fiber_seeds.len() != 2
            || self.product.fiber_seeds.iter().any(|s| s.len() != self.product.fiber_matrix.len())
        {
            return usage("product.fiber_seeds", "needs two points of the fiber dimension");
        }
        if !(self.product.circle_eps > 0.0 && self.product.circle_eps < 1.0) {
            return usage("product.circle_eps", "must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Builds a hyperbolic automorphism from config rows, reporting problems
/// against `field`.
pub fn parse_matrix(field: &str, rows: &[Vec<i64>]) -> Result<ToralAutomorphism<f64>, CliError> {
    let bad = |msg: String| CliError::Usage(format!("config field `{field}`: {msg}"));
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows.len()) {
        return Err(bad("matrix must be square and non-empty".into()));
    }
    let m = IntegerMatrix::from_rows(rows).map_err(|e| bad(e.to_string()))?;
    ToralAutomorphism::new(m).map_err(|e| bad(e.to_string()))
}
