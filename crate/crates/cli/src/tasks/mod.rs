//! One module per subcommand. Each exposes per-criterion section builders
//! alongside a `run` that merges them.

pub mod cones;
pub mod construction;
pub mod gibbs;
pub mod lyapunov;
pub mod product;
pub mod skeleton;
