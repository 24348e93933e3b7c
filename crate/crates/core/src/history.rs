//! Evaluation records and the shared evaluation driver used by every optimizer.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::{EvalError, Objective};
use crate::space::{ParamPoint, SearchSpace, SpaceError};

/// Consecutive failed objective calls after which a run is aborted.
pub const MAX_CONSECUTIVE_FAILURES: usize = 3;

/// One successful objective call. Scores are always "higher is better".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub iteration: u64,
    pub point: ParamPoint,
    pub score: f64,
    /// Seconds spent inside the objective call.
    pub wall_time: f64,
    pub objective_id: String,
}

/// A failed objective call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub iteration: u64,
    pub point: ParamPoint,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HistoryError {
    #[error("iteration {got} does not follow {last}")]
    NonIncreasing { last: u64, got: u64 },
    #[error("score {0} is not finite")]
    NonFinite(f64),
}

/// Ordered successes and failures of one run; iterations are shared and
/// strictly increasing across both lists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EvalRecord>,
    pub failures: Vec<FailureRecord>,
}

/// A success or a failure, borrowed from a [`History`] in iteration order.
#[derive(Debug, Clone, Copy)]
pub enum Event<'a> {
    Success(&'a EvalRecord),
    Failure(&'a FailureRecord),
}

impl Event<'_> {
    pub fn iteration(&self) -> u64 {
        match self {
            Event::Success(r) => r.iteration,
            Event::Failure(f) => f.iteration,
        }
    }

    pub fn point(&self) -> &ParamPoint {
        match self {
            Event::Success(r) => &r.point,
            Event::Failure(f) => &f.point,
        }
    }
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn last_iteration(&self) -> Option<u64> {
        let r = self.records.last().map(|r| r.iteration);
        let f = self.failures.last().map(|f| f.iteration);
        r.max(f)
    }

    fn check_next(&self, iteration: u64) -> Result<(), HistoryError> {
        match self.last_iteration() {
            Some(last) if iteration <= last => Err(HistoryError::NonIncreasing {
                last,
                got: iteration,
            }),
            _ => Ok(()),
        }
    }

    pub fn push_record(&mut self, record: EvalRecord) -> Result<(), HistoryError> {
        self.check_next(record.iteration)?;
        if !record.score.is_finite() {
            return Err(HistoryError::NonFinite(record.score));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn push_failure(&mut self, failure: FailureRecord) -> Result<(), HistoryError> {
        self.check_next(failure.iteration)?;
        self.failures.push(failure);
        Ok(())
    }

    /// Highest score; the earliest record wins ties.
    pub fn best(&self) -> Option<&EvalRecord> {
        self.records.iter().fold(None, |best, r| match best {
            Some(b) if r.score <= b.score => Some(b),
            _ => Some(r),
        })
    }

    /// Running maximum of the score column.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.max(r.score);
                best
            })
            .collect()
    }

    /// Successes and failures merged by iteration.
    pub fn events(&self) -> Vec<Event<'_>> {
        let mut out: Vec<Event<'_>> = self
            .records
            .iter()
            .map(Event::Success)
            .chain(self.failures.iter().map(Event::Failure))
            .collect();
        out.sort_by_key(Event::iteration);
        out
    }

    /// 1-based count of records needed to first come within `eps` of `target`.
    pub fn evaluations_to_reach(&self, target: f64, eps: f64) -> Option<usize> {
        self.records
            .iter()
            .position(|r| r.score >= target - eps)
            .map(|i| i + 1)
    }
}

/// Why an optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The evaluation budget was spent.
    Budget,
    /// Every lattice point has been evaluated.
    Exhausted,
    /// The optimizer's own convergence criterion fired.
    Converged,
    /// The optimizer's iteration cap was reached.
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: History,
    pub best: EvalRecord,
    pub stop: StopReason,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(
        "run aborted after {} consecutive failures: {last_error}",
        MAX_CONSECUTIVE_FAILURES
    )]
    Aborted {
        history: Box<History>,
        last_error: String,
    },
    #[error("run finished without a successful evaluation")]
    NoEvaluations { history: Box<History> },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("surrogate fit failed: {0}")]
    Surrogate(#[from] crate::gp::GpError),
}

impl RunError {
    /// Partial history for aborted runs.
    pub fn history(&self) -> Option<&History> {
        match self {
            RunError::Aborted { history, .. } | RunError::NoEvaluations { history } => {
                Some(history)
            }
            _ => None,
        }
    }
}

/// Result of asking the driver to evaluate a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    /// Fresh objective call.
    Scored(f64),
    /// Previously evaluated point; no call made, no budget used.
    Cached(f64),
    /// Objective call failed (recorded).
    Failed,
    /// Point failed earlier; not retried.
    CachedFailure,
}

impl Evaluation {
    pub fn score(&self) -> Option<f64> {
        match *self {
            Evaluation::Scored(s) | Evaluation::Cached(s) => Some(s),
            _ => None,
        }
    }
}

/// Owns the history of a run and enforces the budget and failure policy.
///
/// The budget counts successful objective calls. With `memoize` on, a point
/// that has been evaluated before is answered from the cache.
pub struct Evaluator<'a> {
    space: &'a SearchSpace,
    objective: &'a mut dyn Objective,
    budget: usize,
    memoize: bool,
    memo: HashMap<ParamPoint, Option<f64>>,
    history: History,
    next_iteration: u64,
    consecutive_failures: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        space: &'a SearchSpace,
        objective: &'a mut dyn Objective,
        budget: usize,
        memoize: bool,
    ) -> Self {
        Self {
            space,
            objective,
            budget,
            memoize,
            memo: HashMap::new(),
            history: History::new(),
            next_iteration: 0,
            consecutive_failures: 0,
        }
    }

    pub fn space(&self) -> &SearchSpace {
        self.space
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn budget_left(&self) -> bool {
        self.history.len() < self.budget
    }

    pub fn evaluate(&mut self, point: &ParamPoint) -> Result<Evaluation, RunError> {
        self.space.require_valid(point)?;
        if self.memoize {
            if let Some(hit) = self.memo.get(point) {
                return Ok(match hit {
                    Some(s) => Evaluation::Cached(*s),
                    None => Evaluation::CachedFailure,
                });
            }
        }
        if !self.budget_left() {
            return Err(RunError::Config(
                "evaluation requested past the budget".into(),
            ));
        }
        let iteration = self.next_iteration;
        self.next_iteration += 1;
        let started = Instant::now();
        let result = self.objective.evaluate(point);
        let wall_time = started.elapsed().as_secs_f64();
        let result = result.and_then(|s| {
            if s.is_finite() {
                Ok(s)
            } else {
                Err(EvalError::Malformed(format!("non-finite score {s}")))
            }
        });
        match result {
            Ok(score) => {
                self.consecutive_failures = 0;
                self.memo.insert(point.clone(), Some(score));
                let record = EvalRecord {
                    iteration,
                    point: point.clone(),
                    score,
                    wall_time,
                    objective_id: self.objective.id().to_string(),
                };
                self.history
                    .push_record(record)
                    .expect("driver iterations are monotone");
                Ok(Evaluation::Scored(score))
            }
            Err(err) => {
                self.consecutive_failures += 1;
                self.memo.insert(point.clone(), None);
                self.history
                    .push_failure(FailureRecord {
                        iteration,
                        point: point.clone(),
                        kind: err.kind().to_string(),
                        message: err.to_string(),
                    })
                    .expect("driver iterations are monotone");
                if self.consecutive_failures >= MAX_CONSECUTIVE_FAILURES {
                    return Err(RunError::Aborted {
                        history: Box::new(std::mem::take(&mut self.history)),
                        last_error: err.to_string(),
                    });
                }
                Ok(Evaluation::Failed)
            }
        }
    }

    pub fn finish(self, stop: StopReason) -> Result<RunOutcome, RunError> {
        match self.history.best().cloned() {
            Some(best) => Ok(RunOutcome {
                history: self.history,
                best,
                stop,
            }),
            None => Err(RunError::NoEvaluations {
                history: Box::new(self.history),
            }),
        }
    }
}
