//! Run orchestration behind the `hypertune` binary: single runs with
//! persisted artifacts, multi-seed comparisons and replay audits.

pub mod artifacts;
pub mod compare;
pub mod replay;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::baselines::{run_cobyla, run_pso, run_random};
use crate::bo::run_bo;
use crate::config::{ConfigError, OptimizerKind, RunConfig};
use crate::history::{History, RunError, RunOutcome, StopReason};
use crate::objectives::ObjectiveKind;
use crate::space::{ParamPoint, DEFAULT_ENUMERATION_CAP};

use artifacts::*;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Objective(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointScore {
    pub iteration: Option<u64>,
    pub params: Map<String, Value>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub objective_id: Option<String>,
    pub status: RunStatus,
    pub stop: Option<StopReason>,
    pub error: Option<String>,
    pub evaluations: usize,
    pub failures: usize,
    pub best: Option<PointScore>,
    /// Lattice maximum by enumeration, for builtin objectives.
    pub optimum: Option<PointScore>,
    pub epsilon: f64,
    /// 1-based count of successful evaluations until the best-so-far came
    /// within `epsilon` of `optimum`.
    pub evaluations_to_optimum: Option<usize>,
    pub best_so_far: Vec<f64>,
    pub objective_time_s: f64,
    pub total_time_s: f64,
    pub started_at: String,
}

/// Result of one optimizer invocation, aborted or not.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub history: History,
    pub stop: Option<StopReason>,
    pub error: Option<String>,
}

impl RunResult {
    pub fn status(&self) -> RunStatus {
        if self.error.is_some() {
            RunStatus::Aborted
        } else {
            RunStatus::Completed
        }
    }

    pub fn best(&self) -> Option<&crate::history::EvalRecord> {
        self.history.best()
    }
}

/// Exhaustive lattice maximum of a builtin objective (first point wins
/// ties). `None` for external objectives or lattices above the
/// enumeration cap.
pub fn known_optimum(cfg: &RunConfig) -> Option<(ParamPoint, f64)> {
    if cfg.objective.kind != ObjectiveKind::Builtin {
        return None;
    }
    let points = cfg.space.enumerate_capped(DEFAULT_ENUMERATION_CAP).ok()?;
    let mut obj = cfg.objective.build(&cfg.space).ok()?;
    let mut best: Option<(ParamPoint, f64)> = None;
    for p in points {
        let s = obj.evaluate(&p).ok()?;
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((p, s));
        }
    }
    best
}

/// Run the configured optimizer against the configured objective.
pub fn run_optimizer(cfg: &RunConfig) -> Result<RunResult, RunnerError> {
    cfg.validate()?;
    let mut objective = cfg
        .objective
        .build(&cfg.space)
        .map_err(RunnerError::Objective)?;
    let obj: &mut dyn crate::objectives::Objective = &mut objective;
    let outcome: Result<RunOutcome, RunError> = match cfg.optimizer {
        OptimizerKind::Bo => run_bo(&cfg.space, obj, &cfg.bo_config()?),
        OptimizerKind::Cobyla => run_cobyla(&cfg.space, obj, &cfg.cobyla_config()?),
        OptimizerKind::Pso => run_pso(&cfg.space, obj, &cfg.pso_config()?),
        OptimizerKind::Random => run_random(&cfg.space, obj, cfg.max_evals, cfg.seed),
    };
    objective.shutdown();
    match outcome {
        Ok(o) => Ok(RunResult {
            history: o.history,
            stop: Some(o.stop),
            error: None,
        }),
        Err(e) => match e.history() {
            Some(h) => Ok(RunResult {
                history: h.clone(),
                stop: None,
                error: Some(e.to_string()),
            }),
            None => Err(RunnerError::Config(ConfigError::Invalid(e.to_string()))),
        },
    }
}

pub fn build_report(
    cfg: &RunConfig,
    result: &RunResult,
    optimum: Option<&(ParamPoint, f64)>,
    total_time_s: f64,
    started_at: String,
) -> RunReport {
    let h = &result.history;
    let best = h.best().map(|b| PointScore {
        iteration: Some(b.iteration),
        params: params_map(&cfg.space, &b.point),
        score: b.score,
    });
    RunReport {
        optimizer: cfg.optimizer,
        seed: cfg.seed,
        objective_id: h.records.first().map(|r| r.objective_id.clone()),
        status: result.status(),
        stop: result.stop,
        error: result.error.clone(),
        evaluations: h.records.len(),
        failures: h.failures.len(),
        best,
        optimum: optimum.map(|(p, s)| PointScore {
            iteration: None,
            params: params_map(&cfg.space, p),
            score: *s,
        }),
        epsilon: cfg.epsilon,
        evaluations_to_optimum: optimum.and_then(|(_, s)| h.evaluations_to_reach(*s, cfg.epsilon)),
        best_so_far: h.best_so_far(),
        objective_time_s: h.records.iter().map(|r| r.wall_time).sum(),
        total_time_s,
        started_at,
    }
}

/// Write every artifact of a finished (or aborted) run into `dir`.
pub fn write_artifacts(
    dir: &Path,
    cfg: &RunConfig,
    result: &RunResult,
    report: &RunReport,
) -> Result<(), RunnerError> {
    let files = [
        (HISTORY_FILE, history_jsonl(&cfg.space, &result.history)),
        (FAILURES_FILE, failures_jsonl(&cfg.space, &result.history)),
        (TRACE_FILE, trace_csv(&result.history)),
        (TIMING_FILE, timing_csv(&result.history)),
        (
            REPORT_FILE,
            serde_json::to_string_pretty(report).expect("serializable") + "\n",
        ),
        (CONFIG_FILE, cfg.resolved_json() + "\n"),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
    }
    if let Some(err) = &result.error {
        let path = dir.join(ABORTED_FILE);
        fs::write(&path, format!("{err}\n")).map_err(io_err(&path))?;
    }
    Ok(())
}

/// A completed `optimize` invocation.
#[derive(Debug, Clone)]
pub struct OptimizeSummary {
    pub dir: PathBuf,
    pub report: RunReport,
}

/// Run once and persist into a fresh timestamped directory under
/// `cfg.output_dir`.
pub fn optimize(cfg: &RunConfig) -> Result<OptimizeSummary, RunnerError> {
    cfg.validate()?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let stem = format!("{}-{}-seed{}", timestamp(), cfg.optimizer, cfg.seed);
    let dir = create_unique_dir(&cfg.output_dir, &stem).map_err(io_err(&cfg.output_dir))?;
    let t0 = Instant::now();
    let result = run_optimizer(cfg)?;
    let total = t0.elapsed().as_secs_f64();
    let optimum = known_optimum(cfg);
    let report = build_report(cfg, &result, optimum.as_ref(), total, started_at);
    write_artifacts(&dir, cfg, &result, &report)?;
    Ok(OptimizeSummary { dir, report })
}

/// Effective configuration recorded in a run directory.
pub fn load_resolved(dir: &Path) -> Result<RunConfig, RunnerError> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(RunConfig::from_resolved_json(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gan_proxy_optimum_by_enumeration() {
        let cfg = RunConfig::gan_proxy_default();
        let (p, _) = known_optimum(&cfg).unwrap();
        assert_eq!(p.0, vec![3, 140, 3]);
    }

    #[test]
    fn negated_objective_flips_optimum() {
        let mut cfg = RunConfig::gan_proxy_default();
        cfg.objective.negate = true;
        let (p, s) = known_optimum(&cfg).unwrap();
        let lowest = cfg
            .space
            .enumerate()
            .unwrap()
            .iter()
            .map(|q| crate::objectives::gan_proxy(q).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(s, -lowest);
        assert_ne!(p.0, vec![3, 140, 3]);
    }

    #[test]
    fn optimize_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::gan_proxy_default();
        cfg.output_dir = dir.path().to_path_buf();
        cfg.max_evals = 8;
        let out = optimize(&cfg).unwrap();
        for f in [
            HISTORY_FILE,
            FAILURES_FILE,
            TRACE_FILE,
            TIMING_FILE,
            REPORT_FILE,
            CONFIG_FILE,
        ] {
            assert!(out.dir.join(f).exists(), "{f}");
        }
        assert!(!out.dir.join(ABORTED_FILE).exists());
        assert_eq!(out.report.evaluations, 8);
        assert_eq!(load_resolved(&out.dir).unwrap(), cfg);
    }
}
