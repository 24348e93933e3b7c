//! TOML run configuration.
//!
//! ```toml
//! optimizer = "bo"
//! seed = 42
//! max_evals = 50
//!
//! [[space]]
//! name = "m"
//! lower = 2
//! upper = 11
//!
//! [objective]
//! kind = "builtin"
//! builtin_id = "gan_proxy"
//!
//! [bo]
//! n_initial = 3
//! ```
//!
//! `seed` and `max_evals` live at the top level and apply to whichever
//! optimizer runs; the per-optimizer sections hold everything else.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::AcquisitionConfig;
use crate::baselines::{CobylaConfig, PsoConfig};
use crate::bo::BoConfig;
use crate::gp::KernelConfig;
use crate::objectives::ObjectiveSpec;
use crate::space::SearchSpace;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Bo,
    Cobyla,
    Pso,
    Random,
}

impl OptimizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::Bo => "bo",
            OptimizerKind::Cobyla => "cobyla",
            OptimizerKind::Pso => "pso",
            OptimizerKind::Random => "random",
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "bo" => Ok(Self::Bo),
            "cobyla" => Ok(Self::Cobyla),
            "pso" => Ok(Self::Pso),
            "random" => Ok(Self::Random),
            other => Err(format!(
                "unknown optimizer `{other}` (expected bo, cobyla, pso or random)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoSection {
    pub n_initial: usize,
    pub acquisition: AcquisitionConfig,
    pub kernel: KernelConfig,
    pub refit_period: usize,
    pub refit_length_scales: bool,
}

impl Default for BoSection {
    fn default() -> Self {
        let d = BoConfig::default();
        Self {
            n_initial: d.n_initial,
            acquisition: d.acquisition,
            kernel: d.kernel,
            refit_period: d.refit_period,
            refit_length_scales: d.refit_length_scales,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CobylaSection {
    pub rho_begin: f64,
    pub rho_end: f64,
}

impl Default for CobylaSection {
    fn default() -> Self {
        let d = CobylaConfig::default();
        Self {
            rho_begin: d.rho_begin,
            rho_end: d.rho_end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoSection {
    pub n_particles: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub v_max: f64,
    pub max_iters: usize,
}

impl Default for PsoSection {
    fn default() -> Self {
        let d = PsoConfig::default();
        Self {
            n_particles: d.n_particles,
            inertia: d.inertia,
            cognitive: d.cognitive,
            social: d.social,
            v_max: d.v_max,
            max_iters: d.max_iters,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_epsilon() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub seed: u64,
    pub max_evals: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Tolerance when counting evaluations to reach the optimum.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Let the optimizer evaluate a point more than once.
    #[serde(default)]
    pub allow_revisit: bool,
    pub space: SearchSpace,
    pub objective: ObjectiveSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bo: Option<BoSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cobyla: Option<CobylaSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pso: Option<PsoSection>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    /// Parse and validate TOML text.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<config>".into(),
            message: e.to_string().trim_end().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The gan_proxy problem on the generator/discriminator lattice with
    /// every optimizer section filled in.
    pub fn gan_proxy_default() -> Self {
        Self {
            optimizer: OptimizerKind::Bo,
            seed: 42,
            max_evals: 50,
            output_dir: default_output_dir(),
            epsilon: default_epsilon(),
            allow_revisit: false,
            space: SearchSpace::gan_lattice(),
            objective: ObjectiveSpec::builtin(crate::objectives::BuiltinId::GanProxy),
            bo: Some(BoSection::default()),
            cobyla: Some(CobylaSection::default()),
            pso: Some(PsoSection::default()),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.max_evals == 0 {
            return invalid("max_evals must be at least 1".into());
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return invalid(format!(
                "epsilon must be a non-negative number, got {}",
                self.epsilon
            ));
        }
        self.objective.validate().map_err(ConfigError::Invalid)?;
        let section_present = match self.optimizer {
            OptimizerKind::Bo => self.bo.is_some(),
            OptimizerKind::Cobyla => self.cobyla.is_some(),
            OptimizerKind::Pso => self.pso.is_some(),
            OptimizerKind::Random => true,
        };
        if !section_present {
            return invalid(format!(
                "optimizer = \"{0}\" needs a [{0}] section",
                self.optimizer
            ));
        }
        let err = |e: crate::history::RunError| ConfigError::Invalid(e.to_string());
        match self.optimizer {
            OptimizerKind::Bo => self.bo_config()?.validate(&self.space).map_err(err),
            OptimizerKind::Cobyla => self.cobyla_config()?.validate(&self.space).map_err(err),
            OptimizerKind::Pso => self.pso_config()?.validate().map_err(err),
            OptimizerKind::Random => Ok(()),
        }
    }

    /// Effective BO settings. `n_initial` is capped by the budget.
    pub fn bo_config(&self) -> Result<BoConfig, ConfigError> {
        let s = self.section(&self.bo, OptimizerKind::Bo)?;
        Ok(BoConfig {
            max_iterations: self.max_evals,
            n_initial: s.n_initial.min(self.max_evals),
            seed: self.seed,
            acquisition: s.acquisition.clone(),
            kernel: s.kernel.clone(),
            refit_period: s.refit_period,
            refit_length_scales: s.refit_length_scales,
            allow_revisit: self.allow_revisit,
        })
    }

    pub fn cobyla_config(&self) -> Result<CobylaConfig, ConfigError> {
        let s = self.section(&self.cobyla, OptimizerKind::Cobyla)?;
        Ok(CobylaConfig {
            rho_begin: s.rho_begin,
            rho_end: s.rho_end,
            max_evals: self.max_evals,
            seed: self.seed,
        })
    }

    pub fn pso_config(&self) -> Result<PsoConfig, ConfigError> {
        let s = self.section(&self.pso, OptimizerKind::Pso)?;
        Ok(PsoConfig {
            n_particles: s.n_particles,
            inertia: s.inertia,
            cognitive: s.cognitive,
            social: s.social,
            v_max: s.v_max,
            max_evals: self.max_evals,
            max_iters: s.max_iters,
            seed: self.seed,
        })
    }

    fn section<'a, T>(&self, s: &'a Option<T>, kind: OptimizerKind) -> Result<&'a T, ConfigError> {
        s.as_ref()
            .ok_or_else(|| ConfigError::Invalid(format!("missing [{kind}] section")))
    }

    /// Pretty JSON of the effective configuration.
    pub fn resolved_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable")
    }

    pub fn from_resolved_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: "config.resolved".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
optimizer = "bo"
seed = 7
max_evals = 20

[[space]]
name = "m"
lower = 2
upper = 11

[[space]]
name = "n"
lower = 64
upper = 256
multiple_of = 4

[objective]
kind = "builtin"
builtin_id = "gan_proxy"

[bo]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.space.dim(), 2);
        assert_eq!(cfg.output_dir, PathBuf::from("runs"));
        let bo = cfg.bo_config().unwrap();
        assert_eq!(bo.max_iterations, 20);
        assert_eq!(bo.seed, 7);
        assert_eq!(bo.n_initial, 3);
        assert_eq!(bo.acquisition.lambda, 1.0);
    }

    #[test]
    fn missing_bound_names_field_and_line() {
        let text = MINIMAL.replace("upper = 11\n", "");
        let msg = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("upper"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("[bo]\n", "[bo]\nlambda = 2\n");
        let msg = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("lambda"), "{msg}");
    }

    #[test]
    fn optimizer_section_must_exist() {
        let text = MINIMAL.replace("optimizer = \"bo\"", "optimizer = \"pso\"");
        let msg = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("[pso]"), "{msg}");
    }

    #[test]
    fn invalid_space_is_reported() {
        let text = MINIMAL.replace("upper = 11", "upper = 1");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn resolved_json_roundtrip() {
        let cfg = RunConfig::gan_proxy_default();
        let back = RunConfig::from_resolved_json(&cfg.resolved_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn small_budget_caps_initial_design() {
        let mut cfg = RunConfig::gan_proxy_default();
        cfg.max_evals = 1;
        assert_eq!(cfg.bo_config().unwrap().n_initial, 1);
        assert!(cfg.validate().is_ok());
    }
}
