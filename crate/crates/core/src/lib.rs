//! Derivative-free hyperparameter search over integer lattices.
//!
//! A Gaussian-process surrogate with UCB or probability-of-improvement
//! acquisition ([`bo`]), two reference optimizers ([`baselines`]), objective
//! adapters for builtin landscapes and child processes ([`objectives`]),
//! image-quality metrics ([`metrics`]) and the run/compare/replay harness
//! behind the `hypertune` binary ([`runner`]).

pub mod acquisition;
pub mod baselines;
pub mod bo;
pub mod config;
pub mod gp;
pub mod history;
pub mod metrics;
pub mod objectives;
pub mod runner;
pub mod sampling;
pub mod space;

pub use acquisition::{AcquisitionConfig, AcquisitionKind, IncumbentRule};
pub use baselines::{run_cobyla, run_pso, run_random, CobylaConfig, PsoConfig};
pub use bo::{run_bo, BoConfig, BoProposer};
pub use gp::{GpError, GpModel, KernelConfig, Posterior};
pub use history::{EvalRecord, FailureRecord, History, RunError, RunOutcome, StopReason};
pub use objectives::{BuiltinId, EvalError, Objective, ObjectiveSpec};
pub use space::{ParamDef, ParamPoint, SearchSpace, SpaceError};
