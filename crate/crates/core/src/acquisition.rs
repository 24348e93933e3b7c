//! Acquisition functions and exhaustive lattice argmax.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{GpModel, Posterior};
use crate::space::{ParamPoint, SearchSpace, SpaceError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AcquisitionError {
    #[error("every lattice point has been visited")]
    Exhausted,
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("model has {model} input dimensions, space has {space}")]
    DimensionMismatch { model: usize, space: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionKind {
    Ucb,
    Pi,
}

impl std::str::FromStr for AcquisitionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ucb" => Ok(Self::Ucb),
            "pi" => Ok(Self::Pi),
            other => Err(format!(
                "unknown acquisition `{other}` (expected ucb or pi)"
            )),
        }
    }
}

/// Which value stands in for the PI incumbent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncumbentRule {
    /// Best score observed so far.
    #[default]
    BestObserved,
    /// Highest posterior mean over the observed inputs.
    BestPosteriorMean,
}

fn default_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub kind: AcquisitionKind,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub incumbent_rule: IncumbentRule,
    /// Filled in by the optimizer before each selection; only PI reads it.
    #[serde(skip, default = "neg_inf")]
    pub incumbent: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self::ucb(default_lambda())
    }
}

impl AcquisitionConfig {
    pub fn ucb(lambda: f64) -> Self {
        Self {
            kind: AcquisitionKind::Ucb,
            lambda,
            incumbent_rule: IncumbentRule::BestObserved,
            incumbent: f64::NEG_INFINITY,
        }
    }

    pub fn pi(incumbent: f64) -> Self {
        Self {
            kind: AcquisitionKind::Pi,
            lambda: default_lambda(),
            incumbent_rule: IncumbentRule::BestObserved,
            incumbent,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.lambda.is_finite() {
            return Err(format!("lambda must be finite, got {}", self.lambda));
        }
        Ok(())
    }

    pub fn score(&self, post: &Posterior) -> f64 {
        match self.kind {
            AcquisitionKind::Ucb => ucb(post, self.lambda),
            AcquisitionKind::Pi => probability_of_improvement(post, self.incumbent),
        }
    }
}

/// `mean + lambda * sd`.
pub fn ucb(post: &Posterior, lambda: f64) -> f64 {
    post.mean + lambda * post.std_dev()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(f >= incumbent)` under the posterior.
pub fn probability_of_improvement(post: &Posterior, incumbent: f64) -> f64 {
    let sd = post.std_dev();
    if sd == 0.0 {
        return if post.mean >= incumbent { 1.0 } else { 0.0 };
    }
    normal_cdf((post.mean - incumbent) / sd)
}

/// Lattice points paired with their unit-cube coordinates.
#[derive(Debug, Clone)]
pub struct Candidates {
    pub points: Vec<ParamPoint>,
    pub unit: Vec<Vec<f64>>,
}

impl Candidates {
    pub fn from_space(space: &SearchSpace) -> Result<Self, SpaceError> {
        let points = space.enumerate()?;
        let unit = points
            .iter()
            .map(|p| space.normalize_unchecked(p))
            .collect();
        Ok(Self { points, unit })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the best unexcluded candidate; the first one wins ties.
    pub fn argmax(
        &self,
        model: &GpModel,
        cfg: &AcquisitionConfig,
        excluded: impl Fn(usize) -> bool,
    ) -> Result<usize, AcquisitionError> {
        if let Some(u) = self.unit.first() {
            if u.len() != model.dim() {
                return Err(AcquisitionError::DimensionMismatch {
                    model: model.dim(),
                    space: u.len(),
                });
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, u) in self.unit.iter().enumerate() {
            if excluded(i) {
                continue;
            }
            let mut value = cfg.score(&model.predict_unchecked(u));
            if value.is_nan() {
                value = f64::NEG_INFINITY;
            }
            match best {
                Some((_, b)) if value <= b => {}
                _ => best = Some((i, value)),
            }
        }
        best.map(|(i, _)| i).ok_or(AcquisitionError::Exhausted)
    }
}

/// The unvisited lattice point with the highest acquisition value.
pub fn select_next(
    model: &GpModel,
    space: &SearchSpace,
    cfg: &AcquisitionConfig,
    visited: &HashSet<ParamPoint>,
) -> Result<ParamPoint, AcquisitionError> {
    let candidates = Candidates::from_space(space)?;
    let idx = candidates.argmax(model, cfg, |i| visited.contains(&candidates.points[i]))?;
    Ok(candidates.points[idx].clone())
}
