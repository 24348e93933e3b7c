//! Multi-seed, multi-optimizer comparison with identical budgets.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::artifacts::{create_unique_dir, timestamp};
use super::{
    build_report, io_err, known_optimum, run_optimizer, write_artifacts, RunStatus, RunnerError,
};
use crate::config::{OptimizerKind, RunConfig};

/// Environment variable that overrides `--jobs`.
pub const JOBS_ENV: &str = "HYPERTUNE_JOBS";

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSpec {
    pub optimizers: Vec<OptimizerKind>,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub jobs: usize,
}

/// Parse `1..20` (inclusive), `3` or `1,4,9`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    let num = |t: &str| {
        t.trim()
            .parse::<u64>()
            .map_err(|_| format!("invalid seed `{}`", t.trim()))
    };
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b) = (num(a)?, num(b)?);
        if a > b {
            return Err(format!("empty seed range {s}"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(num).collect()
}

pub fn parse_optimizers(s: &str) -> Result<Vec<OptimizerKind>, String> {
    let list: Vec<OptimizerKind> = s.split(',').map(str::parse).collect::<Result<_, _>>()?;
    if list.is_empty() {
        return Err("no optimizers given".into());
    }
    Ok(list)
}

/// Worker count: `HYPERTUNE_JOBS` if set and valid, else `cli`, else 1.
pub fn resolve_jobs(cli: Option<usize>) -> usize {
    std::env::var(JOBS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .or(cli)
        .unwrap_or(1)
        .max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub status: Option<RunStatus>,
    /// Set when the cell could not run at all or was aborted.
    pub error: Option<String>,
    pub evaluations: usize,
    pub best_score: Option<f64>,
    pub evaluations_to_optimum: Option<usize>,
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub optimizer: OptimizerKind,
    pub cells: usize,
    pub failed_cells: usize,
    pub reached_optimum: usize,
    /// Runs that never reach the optimum count as infinitely slow; `None`
    /// means infinite.
    pub median_evaluations_to_optimum: Option<f64>,
    pub iqr_evaluations_to_optimum: Option<f64>,
    pub median_best_score: Option<f64>,
    pub iqr_best_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub optimum_score: Option<f64>,
    pub summaries: Vec<OptimizerSummary>,
    pub cells: Vec<Cell>,
    pub dir: PathBuf,
}

/// Linear-interpolation quantile of sorted data; `+inf` entries are allowed.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi || frac == 0.0 {
        sorted[lo]
    } else if sorted[hi].is_infinite() {
        sorted[hi]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

fn median_iqr(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&v, 0.25), quantile(&v, 0.75));
    let iqr = if q3.is_infinite() {
        f64::INFINITY
    } else {
        q3 - q1
    };
    (quantile(&v, 0.5), iqr)
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn summarize(optimizer: OptimizerKind, cells: &[&Cell]) -> OptimizerSummary {
    let ran: Vec<&&Cell> = cells.iter().filter(|c| c.status.is_some()).collect();
    let evals: Vec<f64> = ran
        .iter()
        .map(|c| c.evaluations_to_optimum.map_or(f64::INFINITY, |v| v as f64))
        .collect();
    let scores: Vec<f64> = ran.iter().filter_map(|c| c.best_score).collect();
    let (me, ie) = if evals.is_empty() {
        (f64::INFINITY, f64::INFINITY)
    } else {
        median_iqr(&evals)
    };
    let (ms, is) = if scores.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        median_iqr(&scores)
    };
    OptimizerSummary {
        optimizer,
        cells: cells.len(),
        failed_cells: cells.iter().filter(|c| c.error.is_some()).count(),
        reached_optimum: ran
            .iter()
            .filter(|c| c.evaluations_to_optimum.is_some())
            .count(),
        median_evaluations_to_optimum: finite(me),
        iqr_evaluations_to_optimum: finite(ie),
        median_best_score: finite(ms),
        iqr_best_score: finite(is),
    }
}

fn run_cell(
    base: &RunConfig,
    optimizer: OptimizerKind,
    seed: u64,
    budget: usize,
    root: &Path,
    optimum: Option<&(crate::space::ParamPoint, f64)>,
) -> Cell {
    let mut cfg = base.clone();
    cfg.optimizer = optimizer;
    cfg.seed = seed;
    cfg.max_evals = budget;
    cfg.output_dir = root.to_path_buf();
    let mut cell = Cell {
        optimizer,
        seed,
        status: None,
        error: None,
        evaluations: 0,
        best_score: None,
        evaluations_to_optimum: None,
        dir: None,
    };
    let started = chrono::Utc::now().to_rfc3339();
    let t0 = Instant::now();
    let outcome = cfg
        .validate()
        .map_err(RunnerError::from)
        .and_then(|_| run_optimizer(&cfg));
    match outcome {
        Ok(result) => {
            let report = build_report(&cfg, &result, optimum, t0.elapsed().as_secs_f64(), started);
            let dir = root.join(format!("{optimizer}-seed{seed}"));
            let written = fs::create_dir_all(&dir)
                .map_err(io_err(&dir))
                .and_then(|_| write_artifacts(&dir, &cfg, &result, &report));
            cell.status = Some(report.status);
            cell.error = report.error.clone();
            cell.evaluations = report.evaluations;
            cell.best_score = report.best.as_ref().map(|b| b.score);
            cell.evaluations_to_optimum = report.evaluations_to_optimum;
            match written {
                Ok(()) => cell.dir = Some(dir),
                Err(e) => cell.error = Some(e.to_string()),
            }
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

/// Run every (optimizer, seed) cell and write per-cell artifacts plus
/// `summary.csv` and `comparison.json` under a fresh directory in
/// `base.output_dir`.
pub fn compare(base: &RunConfig, spec: &CompareSpec) -> Result<Comparison, RunnerError> {
    if spec.seeds.len() < 2 {
        return Err(RunnerError::Config(crate::config::ConfigError::Invalid(
            "compare needs at least 2 seeds".into(),
        )));
    }
    if spec.budget == 0 {
        return Err(RunnerError::Config(crate::config::ConfigError::Invalid(
            "budget must be at least 1".into(),
        )));
    }
    let root = create_unique_dir(&base.output_dir, &format!("compare-{}", timestamp()))
        .map_err(io_err(&base.output_dir))?;
    let optimum = known_optimum(base);

    let tasks: Vec<(OptimizerKind, u64)> = spec
        .optimizers
        .iter()
        .flat_map(|&o| spec.seeds.iter().map(move |&s| (o, s)))
        .collect();
    let slots: Vec<Mutex<Option<Cell>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..spec.jobs.max(1).min(tasks.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(opt, seed)) = tasks.get(i) else {
                    break;
                };
                let cell = run_cell(base, opt, seed, spec.budget, &root, optimum.as_ref());
                *slots[i].lock().expect("cell slot") = Some(cell);
            });
        }
    });
    let cells: Vec<Cell> = slots
        .into_iter()
        .map(|m| m.into_inner().expect("cell slot").expect("every task ran"))
        .collect();

    let summaries = spec
        .optimizers
        .iter()
        .map(|&o| {
            let mine: Vec<&Cell> = cells.iter().filter(|c| c.optimizer == o).collect();
            summarize(o, &mine)
        })
        .collect();
    let comparison = Comparison {
        budget: spec.budget,
        seeds: spec.seeds.clone(),
        optimum_score: optimum.map(|(_, s)| s),
        summaries,
        cells,
        dir: root.clone(),
    };

    let path = root.join("summary.csv");
    fs::write(&path, summary_csv(&comparison)).map_err(io_err(&path))?;
    let path = root.join("comparison.json");
    let body = serde_json::to_string_pretty(&comparison).expect("serializable") + "\n";
    fs::write(&path, body).map_err(io_err(&path))?;
    Ok(comparison)
}

fn opt_cell<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn summary_csv(c: &Comparison) -> String {
    let mut out =
        String::from("optimizer,seed,status,evaluations,best_score,evaluations_to_optimum,error\n");
    for cell in &c.cells {
        let status = match cell.status {
            Some(RunStatus::Completed) => "completed",
            Some(RunStatus::Aborted) => "aborted",
            None => "failed",
        };
        let error = cell
            .error
            .as_deref()
            .unwrap_or("")
            .replace(['"', '\n'], " ");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},\"{}\"",
            cell.optimizer,
            cell.seed,
            status,
            cell.evaluations,
            opt_cell(cell.best_score),
            opt_cell(cell.evaluations_to_optimum),
            error
        );
    }
    out
}

/// Human-readable table: one row per optimizer.
pub fn render_table(c: &Comparison) -> String {
    let show = |v: Option<f64>| v.map_or_else(|| "inf".to_string(), |v| format!("{v:.1}"));
    let score = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>6} {:>8} {:>10} {:>8} {:>12} {:>12}",
        "opt", "cells", "reached", "med_evals", "iqr", "med_best", "iqr_best"
    );
    for s in &c.summaries {
        let _ = writeln!(
            out,
            "{:<8} {:>6} {:>8} {:>10} {:>8} {:>12} {:>12}",
            s.optimizer.as_str(),
            s.cells,
            s.reached_optimum,
            show(s.median_evaluations_to_optimum),
            show(s.iqr_evaluations_to_optimum),
            score(s.median_best_score),
            score(s.iqr_best_score),
        );
    }
    for cell in c.cells.iter().filter(|c| c.error.is_some()) {
        let _ = writeln!(
            out,
            "cell {}-seed{}: {}",
            cell.optimizer,
            cell.seed,
            cell.error.as_deref().unwrap_or_default()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_syntax() {
        assert_eq!(parse_seeds("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_seeds("1..=2").unwrap(), vec![1, 2]);
        assert_eq!(parse_seeds("5, 7").unwrap(), vec![5, 7]);
        assert!(parse_seeds("4..1").is_err());
        assert!(parse_seeds("a").is_err());
    }

    #[test]
    fn optimizer_list() {
        assert_eq!(
            parse_optimizers("bo,pso").unwrap(),
            vec![OptimizerKind::Bo, OptimizerKind::Pso]
        );
        assert!(parse_optimizers("bo,nope").is_err());
    }

    #[test]
    fn quantiles_match_linear_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.75), 3.25);
        let w = [1.0, 2.0, f64::INFINITY, f64::INFINITY];
        assert_eq!(quantile(&w, 0.5), f64::INFINITY);
        assert_eq!(median_iqr(&[3.0, 1.0, 2.0]), (2.0, 1.0));
    }
}
