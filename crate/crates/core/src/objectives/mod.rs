//! Objective registry: built-in deterministic landscapes and external
//! child-process objectives.

mod builtin;
mod external;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{ParamPoint, SearchSpace, SpaceError};

pub use builtin::{
    gan_proxy, rastrigin_discrete, sphere, Builtin, BuiltinId, GAN_PROXY_PEAK, GAN_PROXY_RIPPLE,
};
pub use external::{EvalRequest, EvalResponse, ExternalObjective, SHUTDOWN_LINE};

/// Default per-evaluation timeout for external objectives, in seconds.
pub const DEFAULT_TIMEOUT_SECS: f64 = 600.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    InvalidPoint(#[from] SpaceError),
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("objective process exited: {0}")]
    ProcessExited(String),
    #[error("failed to start objective process: {0}")]
    Spawn(String),
    #[error("i/o error talking to objective process: {0}")]
    Io(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("response id {got} does not match request id {expected}")]
    IdMismatch { expected: u64, got: u64 },
    #[error("objective reported an error: {0}")]
    Remote(String),
    #[error("{0}")]
    Other(String),
}

impl EvalError {
    /// Short machine-readable tag stored in failure records.
    pub fn kind(&self) -> &'static str {
        match self {
            EvalError::InvalidPoint(_) => "invalid_point",
            EvalError::Timeout(_) => "timeout",
            EvalError::ProcessExited(_) => "process_exited",
            EvalError::Spawn(_) => "spawn",
            EvalError::Io(_) => "io",
            EvalError::Malformed(_) => "malformed",
            EvalError::IdMismatch { .. } => "id_mismatch",
            EvalError::Remote(_) => "remote",
            EvalError::Other(_) => "other",
        }
    }
}

/// A scored black box. Implementations return "higher is better" scores.
pub trait Objective {
    fn id(&self) -> &str;

    fn evaluate(&mut self, point: &ParamPoint) -> Result<f64, EvalError>;

    /// Whether repeated evaluation of a point yields the same score.
    fn is_deterministic(&self) -> bool {
        true
    }

    /// Release any external resources. Called once at the end of a run.
    fn shutdown(&mut self) {}
}

impl<T: Objective + ?Sized> Objective for Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn evaluate(&mut self, point: &ParamPoint) -> Result<f64, EvalError> {
        (**self).evaluate(point)
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
    fn shutdown(&mut self) {
        (**self).shutdown()
    }
}

/// Wraps an objective and optionally flips the sign of its score.
pub struct Signed<O> {
    inner: O,
    negate: bool,
}

impl<O: Objective> Signed<O> {
    pub fn new(inner: O, negate: bool) -> Self {
        Self { inner, negate }
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: Objective> Objective for Signed<O> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn evaluate(&mut self, point: &ParamPoint) -> Result<f64, EvalError> {
        let s = self.inner.evaluate(point)?;
        Ok(if self.negate { -s } else { s })
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }

    fn shutdown(&mut self) {
        self.inner.shutdown()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Builtin,
    External,
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_SECS
}

/// Declarative description of an objective, as found in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin_id: Option<BuiltinId>,
    /// Program and arguments, e.g. `["python3", "trainer.py"]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
    #[serde(default)]
    pub negate: bool,
    /// Seconds per evaluation (external only).
    #[serde(default = "default_timeout")]
    pub timeout: f64,
}

impl ObjectiveSpec {
    pub fn builtin(id: BuiltinId) -> Self {
        Self {
            kind: ObjectiveKind::Builtin,
            builtin_id: Some(id),
            command: None,
            negate: false,
            timeout: DEFAULT_TIMEOUT_SECS,
        }
    }

    pub fn external(command: Vec<String>) -> Self {
        Self {
            kind: ObjectiveKind::External,
            builtin_id: None,
            command: Some(command),
            negate: false,
            timeout: DEFAULT_TIMEOUT_SECS,
        }
    }

    pub fn negated(mut self, negate: bool) -> Self {
        self.negate = negate;
        self
    }

    pub fn with_timeout(mut self, seconds: f64) -> Self {
        self.timeout = seconds;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            ObjectiveKind::Builtin => {
                if self.builtin_id.is_none() {
                    return Err("objective.builtin_id is required for kind = \"builtin\"".into());
                }
                if self.command.is_some() {
                    return Err("objective.command is only allowed for kind = \"external\"".into());
                }
            }
            ObjectiveKind::External => {
                match &self.command {
                    None => {
                        return Err("objective.command is required for kind = \"external\"".into())
                    }
                    Some(c) if c.is_empty() || c[0].is_empty() => {
                        return Err("objective.command must name a program".into())
                    }
                    _ => {}
                }
                if self.builtin_id.is_some() {
                    return Err(
                        "objective.builtin_id is only allowed for kind = \"builtin\"".into(),
                    );
                }
                if !(self.timeout > 0.0 && self.timeout.is_finite()) {
                    return Err(format!(
                        "objective.timeout must be positive, got {}",
                        self.timeout
                    ));
                }
            }
        }
        Ok(())
    }

    /// The builtin behind this objective, if any.
    pub fn builtin_id(&self) -> Option<BuiltinId> {
        match self.kind {
            ObjectiveKind::Builtin => self.builtin_id,
            ObjectiveKind::External => None,
        }
    }

    /// Instantiate the objective for `space`.
    pub fn build(&self, space: &SearchSpace) -> Result<Box<dyn Objective + Send>, String> {
        self.validate()?;
        Ok(match self.kind {
            ObjectiveKind::Builtin => {
                let b = Builtin::new(self.builtin_id.expect("validated"), space)?;
                Box::new(Signed::new(b, self.negate))
            }
            ObjectiveKind::External => {
                let ext = ExternalObjective::new(
                    self.command.clone().expect("validated"),
                    space.names().map(str::to_string).collect(),
                    Duration::from_secs_f64(self.timeout),
                );
                Box::new(Signed::new(ext, self.negate))
            }
        })
    }
}

/// Evaluate an objective at a single point, spinning up and shutting down the
/// objective around the call.
pub fn evaluate(
    spec: &ObjectiveSpec,
    space: &SearchSpace,
    point: &ParamPoint,
) -> Result<f64, EvalError> {
    space.require_valid(point)?;
    let mut obj = spec.build(space).map_err(EvalError::Other)?;
    let out = obj.evaluate(point);
    obj.shutdown();
    out
}
