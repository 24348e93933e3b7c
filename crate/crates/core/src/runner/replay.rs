//! Consistency audit of a persisted run directory.
//!
//! Every run: points are on the lattice, `trace.csv` is the running max of
//! the history scores and `report.json` names the max-score line. BO runs
//! additionally have every proposal re-derived from the recorded prefix.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::artifacts::*;
use super::{load_resolved, RunReport};
use crate::bo::{self, ReplayError};
use crate::config::OptimizerKind;

#[derive(Debug, Error)]
pub enum AuditError {
    /// Missing or unreadable artifacts.
    #[error("{0}")]
    Unreadable(String),
    #[error("divergence at iteration {iteration}: {detail}")]
    Divergence { iteration: u64, detail: String },
    #[error("inconsistent run: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub optimizer: OptimizerKind,
    pub evaluations: usize,
    pub failures: usize,
    /// Whether proposals were re-derived (BO only).
    pub proposals_replayed: bool,
}

pub fn replay_dir(dir: &Path) -> Result<AuditReport, AuditError> {
    let cfg = load_resolved(dir).map_err(|e| AuditError::Unreadable(e.to_string()))?;
    let history = read_history(dir, &cfg.space).map_err(AuditError::Unreadable)?;

    for r in &history.records {
        if !cfg.space.validate(&r.point).unwrap_or(false) {
            return Err(AuditError::Divergence {
                iteration: r.iteration,
                detail: format!("point {} is not on the lattice", r.point),
            });
        }
    }

    let trace = read_trace(&dir.join(TRACE_FILE)).map_err(AuditError::Unreadable)?;
    if trace.len() != history.records.len() {
        return Err(AuditError::Inconsistent(format!(
            "{TRACE_FILE} has {} rows, {HISTORY_FILE} has {} records",
            trace.len(),
            history.records.len()
        )));
    }
    let mut running = f64::NEG_INFINITY;
    for ((it, score, best), r) in trace.iter().zip(&history.records) {
        running = running.max(r.score);
        if *it != r.iteration || *score != r.score || *best != running {
            return Err(AuditError::Divergence {
                iteration: r.iteration,
                detail: format!("{TRACE_FILE} row ({it}, {score}, {best}) disagrees with history"),
            });
        }
    }

    let report_path = dir.join(REPORT_FILE);
    let report: RunReport = fs::read_to_string(&report_path)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
        .map_err(|e| AuditError::Unreadable(format!("{}: {e}", report_path.display())))?;
    let best = history.best();
    let matches = match (&report.best, best) {
        (None, None) => true,
        (Some(rb), Some(hb)) => {
            rb.iteration == Some(hb.iteration)
                && rb.score == hb.score
                && point_from_params(&cfg.space, &rb.params).ok().as_ref() == Some(&hb.point)
        }
        _ => false,
    };
    if !matches {
        return Err(AuditError::Inconsistent(format!(
            "{REPORT_FILE} best does not match the max-score line of {HISTORY_FILE}"
        )));
    }
    if report.evaluations != history.records.len() || report.failures != history.failures.len() {
        return Err(AuditError::Inconsistent(format!(
            "{REPORT_FILE} counts do not match the history files"
        )));
    }

    let proposals_replayed = cfg.optimizer == OptimizerKind::Bo;
    if proposals_replayed {
        let bo_cfg = cfg
            .bo_config()
            .map_err(|e| AuditError::Unreadable(e.to_string()))?;
        match bo::replay(&cfg.space, &bo_cfg, &history) {
            Ok(()) => {}
            Err(ReplayError::Divergence {
                iteration,
                recorded,
                proposed,
            }) => {
                let proposed = proposed.map_or_else(|| "nothing".to_string(), |p| p.to_string());
                return Err(AuditError::Divergence {
                    iteration,
                    detail: format!("recorded {recorded}, replay proposes {proposed}"),
                });
            }
            Err(e) => return Err(AuditError::Unreadable(e.to_string())),
        }
    }

    Ok(AuditReport {
        optimizer: cfg.optimizer,
        evaluations: history.records.len(),
        failures: history.failures.len(),
        proposals_replayed,
    })
}
