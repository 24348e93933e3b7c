//! Bayesian optimization over a search-space lattice.
//!
//! Seeded random initial design, then repeated GP fit plus exhaustive
//! acquisition argmax over unvisited lattice points. Proposals depend only on
//! the configuration and the history so far, which is what makes
//! [`replay`] possible.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{AcquisitionConfig, Candidates, IncumbentRule};
use crate::gp::{self, GpModel, KernelConfig, LENGTH_SCALE_GRID};
use crate::history::{Evaluator, Event, History, RunError, RunOutcome, StopReason};
use crate::objectives::Objective;
use crate::sampling::{seeded, IndexSampler, SeededRng};
use crate::space::{ParamPoint, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    pub max_iterations: usize,
    pub n_initial: usize,
    pub seed: u64,
    pub acquisition: AcquisitionConfig,
    pub kernel: KernelConfig,
    /// Length scales are re-selected by marginal likelihood every this many fits.
    pub refit_period: usize,
    pub refit_length_scales: bool,
    /// Permit proposing already-evaluated points (stochastic objectives).
    pub allow_revisit: bool,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            n_initial: 3,
            seed: 0,
            acquisition: AcquisitionConfig::default(),
            kernel: KernelConfig::default(),
            refit_period: 5,
            refit_length_scales: true,
            allow_revisit: false,
        }
    }
}

impl BoConfig {
    pub fn with_budget(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, space: &SearchSpace) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.max_iterations == 0 {
            return bad("bo: max_iterations must be positive".into());
        }
        if self.n_initial == 0 || self.n_initial > self.max_iterations {
            return bad(format!(
                "bo: n_initial must be in 1..={}, got {}",
                self.max_iterations, self.n_initial
            ));
        }
        if self.n_initial < 2 && self.max_iterations >= 2 && space.lattice_size() >= 2 {
            return bad("bo: n_initial must be at least 2".into());
        }
        if self.refit_period == 0 {
            return bad("bo: refit_period must be positive".into());
        }
        self.kernel
            .expanded(space.dim())
            .map_err(|e| RunError::Config(format!("bo.kernel: {e}")))?;
        self.acquisition
            .validate()
            .map_err(|e| RunError::Config(format!("bo.acquisition: {e}")))?;
        Ok(())
    }
}

/// Deterministic next-point generator.
pub struct BoProposer {
    space: SearchSpace,
    cfg: BoConfig,
    candidates: Candidates,
    rng: SeededRng,
    sampler: IndexSampler,
    kernel: KernelConfig,
    fits: usize,
    last_model: Option<GpModel>,
}

impl BoProposer {
    pub fn new(space: &SearchSpace, cfg: &BoConfig) -> Result<Self, RunError> {
        cfg.validate(space)?;
        let candidates = Candidates::from_space(space)?;
        let kernel = cfg.kernel.expanded(space.dim())?;
        Ok(Self {
            space: space.clone(),
            cfg: cfg.clone(),
            sampler: IndexSampler::new(candidates.len() as u64),
            candidates,
            rng: seeded(cfg.seed),
            kernel,
            fits: 0,
            last_model: None,
        })
    }

    /// Surrogate behind the most recent model-based proposal.
    pub fn last_model(&self) -> Option<&GpModel> {
        self.last_model.as_ref()
    }

    /// Current kernel hyperparameters.
    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    /// Next point to evaluate, or `None` once every admissible point is used.
    pub fn propose(&mut self, history: &History) -> Result<Option<ParamPoint>, RunError> {
        let mut excluded = HashSet::new();
        for f in &history.failures {
            excluded.insert(self.space.index_of(&f.point)?);
        }
        if !self.cfg.allow_revisit {
            for r in &history.records {
                excluded.insert(self.space.index_of(&r.point)?);
            }
        }

        if history.records.len() < self.cfg.n_initial {
            while let Some(idx) = self.sampler.next(&mut self.rng) {
                if !excluded.contains(&idx) {
                    return Ok(Some(self.candidates.points[idx as usize].clone()));
                }
            }
            return Ok(None);
        }

        let xs: Vec<Vec<f64>> = history
            .records
            .iter()
            .map(|r| self.space.normalize(&r.point))
            .collect::<Result<_, _>>()?;
        let ys: Vec<f64> = history.records.iter().map(|r| r.score).collect();
        let prior_mean = ys.iter().sum::<f64>() / ys.len() as f64;

        let model =
            if self.cfg.refit_length_scales && self.fits.is_multiple_of(self.cfg.refit_period) {
                let m = gp::fit_with_grid(&self.kernel, prior_mean, &xs, &ys, &LENGTH_SCALE_GRID)?;
                self.kernel.length_scale = m.kernel().length_scale.clone();
                m
            } else {
                gp::fit(&self.kernel, prior_mean, &xs, &ys)?
            };
        self.fits += 1;

        let mut acq = self.cfg.acquisition.clone();
        acq.incumbent = match acq.incumbent_rule {
            IncumbentRule::BestObserved => ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            IncumbentRule::BestPosteriorMean => model
                .train_x()
                .iter()
                .map(|x| model.predict_unchecked(x).mean)
                .fold(f64::NEG_INFINITY, f64::max),
        };

        let choice = self
            .candidates
            .argmax(&model, &acq, |i| excluded.contains(&(i as u64)));
        self.last_model = Some(model);
        match choice {
            Ok(i) => Ok(Some(self.candidates.points[i].clone())),
            Err(crate::acquisition::AcquisitionError::Exhausted) => Ok(None),
            Err(e) => Err(RunError::Config(e.to_string())),
        }
    }
}

/// Run Bayesian optimization for `cfg.max_iterations` successful evaluations
/// or until the lattice is exhausted.
pub fn run_bo(
    space: &SearchSpace,
    objective: &mut dyn Objective,
    cfg: &BoConfig,
) -> Result<RunOutcome, RunError> {
    let mut proposer = BoProposer::new(space, cfg)?;
    let mut ev = Evaluator::new(space, objective, cfg.max_iterations, !cfg.allow_revisit);
    let stop = loop {
        if !ev.budget_left() {
            break StopReason::Budget;
        }
        match proposer.propose(ev.history())? {
            Some(point) => {
                ev.evaluate(&point)?;
            }
            None => break StopReason::Exhausted,
        }
    };
    ev.finish(stop)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("iteration {iteration}: recorded {recorded}, replay proposes {}", describe(.proposed))]
    Divergence {
        iteration: u64,
        recorded: ParamPoint,
        proposed: Option<ParamPoint>,
    },
    #[error("replay failed: {0}")]
    Run(String),
}

/// Re-derive every proposal from the recorded prefix and compare.
pub fn replay(space: &SearchSpace, cfg: &BoConfig, history: &History) -> Result<(), ReplayError> {
    let run_err = |e: RunError| ReplayError::Run(e.to_string());
    let mut proposer = BoProposer::new(space, cfg).map_err(run_err)?;
    let mut prefix = History::new();
    for event in history.events() {
        let proposed = proposer.propose(&prefix).map_err(run_err)?;
        if proposed.as_ref() != Some(event.point()) {
            return Err(ReplayError::Divergence {
                iteration: event.iteration(),
                recorded: event.point().clone(),
                proposed,
            });
        }
        let pushed = match event {
            Event::Success(r) => prefix.push_record(r.clone()),
            Event::Failure(f) => prefix.push_failure(f.clone()),
        };
        pushed.map_err(|e| ReplayError::Run(e.to_string()))?;
    }
    Ok(())
}

fn describe(p: &Option<ParamPoint>) -> String {
    p.as_ref()
        .map_or_else(|| "nothing".to_string(), ToString::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::testing::ScriptedObjective;
    use crate::objectives::{Builtin, BuiltinId};
    use crate::space::ParamDef;

    struct Constant;
    impl Objective for Constant {
        fn id(&self) -> &str {
            "constant"
        }
        fn evaluate(&mut self, _: &ParamPoint) -> Result<f64, crate::objectives::EvalError> {
            Ok(1.0)
        }
    }

    #[test]
    fn one_point_lattice() {
        let space = SearchSpace::new(vec![ParamDef::range("x", 4, 4).unwrap()]).unwrap();
        let cfg = BoConfig::default().with_budget(10);
        let out = run_bo(&space, &mut Constant, &cfg).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.best.point, ParamPoint(vec![4]));
        assert_eq!(out.stop, StopReason::Exhausted);
    }

    #[test]
    fn constant_objective_keeps_first_point() {
        let space = SearchSpace::gan_lattice();
        let cfg = BoConfig::default().with_budget(12).with_seed(9);
        let out = run_bo(&space, &mut Constant, &cfg).unwrap();
        assert_eq!(out.history.len(), 12);
        assert_eq!(out.best.iteration, 0);
        let distinct: HashSet<_> = out.history.records.iter().map(|r| &r.point).collect();
        assert_eq!(distinct.len(), 12);
        for r in &out.history.records {
            assert!(space.validate(&r.point).unwrap());
        }
    }

    #[test]
    fn small_lattice_is_exhausted_cleanly() {
        let space = SearchSpace::new(vec![ParamDef::range("x", 0, 4).unwrap()]).unwrap();
        let mut obj = Builtin::new(BuiltinId::Sphere, &space).unwrap();
        let out = run_bo(&space, &mut obj, &BoConfig::default().with_budget(50)).unwrap();
        assert_eq!(out.history.len(), 5);
        assert_eq!(out.stop, StopReason::Exhausted);
        assert_eq!(out.best.point, ParamPoint(vec![2]));
    }

    #[test]
    fn failures_trigger_reacquisition_then_abort() {
        let space = SearchSpace::gan_lattice();
        let cfg = BoConfig::default().with_budget(5).with_seed(1);
        let mut obj = ScriptedObjective::new(vec![
            Ok(1.0),
            Err(()),
            Ok(2.0),
            Ok(0.5),
            Err(()),
            Err(()),
            Ok(3.0),
            Ok(0.0),
        ]);
        let out = run_bo(&space, &mut obj, &cfg).unwrap();
        assert_eq!(out.history.len(), 5);
        assert_eq!(out.history.failures.len(), 3);
        let failed: HashSet<_> = out.history.failures.iter().map(|f| &f.point).collect();
        assert!(out
            .history
            .records
            .iter()
            .all(|r| !failed.contains(&r.point)));
        replay(&space, &cfg, &out.history).unwrap();

        let mut dead = ScriptedObjective::new(vec![Ok(1.0), Err(()), Err(()), Err(())]);
        match run_bo(&space, &mut dead, &cfg) {
            Err(RunError::Aborted { history, .. }) => {
                assert_eq!(history.records.len(), 1);
                assert_eq!(history.failures.len(), 3);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let space = SearchSpace::gan_lattice();
        assert!(BoConfig::default().validate(&space).is_ok());
        let mut c = BoConfig {
            n_initial: 1,
            ..BoConfig::default()
        };
        assert!(c.validate(&space).is_err());
        c.n_initial = 60;
        assert!(c.validate(&space).is_err());
        let mut c = BoConfig::default().with_budget(1);
        c.n_initial = 1;
        assert!(c.validate(&space).is_ok());
        let mut c = BoConfig::default();
        c.kernel.length_scale = vec![0.1, 0.2];
        assert!(c.validate(&space).is_err());
    }

    #[test]
    fn replay_detects_tampering() {
        let space = SearchSpace::gan_lattice();
        let cfg = BoConfig::default().with_budget(15).with_seed(3);
        let mut obj = Builtin::new(BuiltinId::GanProxy, &space).unwrap();
        let out = run_bo(&space, &mut obj, &cfg).unwrap();
        replay(&space, &cfg, &out.history).unwrap();

        for victim in [1usize, 8] {
            let mut tampered = out.history.clone();
            let p = &mut tampered.records[victim].point.0;
            p[0] = if p[0] == 2 { 3 } else { 2 };
            match replay(&space, &cfg, &tampered) {
                Err(ReplayError::Divergence { iteration, .. }) => {
                    assert_eq!(iteration, victim as u64)
                }
                other => panic!("expected divergence, got {other:?}"),
            }
        }
    }
}
