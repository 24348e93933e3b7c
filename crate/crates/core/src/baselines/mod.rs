//! Reference optimizers: a linear trust-region method, a particle swarm and
//! plain random search.

pub mod cobyla;
pub mod pso;
pub mod random;

pub use cobyla::{run_cobyla, run_cobyla_traced, CobylaConfig, CobylaTrace};
pub use pso::{run_pso, update_velocity, PsoConfig};
pub use random::run_random;
