//! On-disk run layout.
//!
//! ```text
//! <run>/history.jsonl    one successful evaluation per line
//! <run>/failures.jsonl   one failed evaluation per line
//! <run>/trace.csv        iteration,score,best_so_far
//! <run>/timing.csv       iteration,wall_time_s
//! <run>/report.json
//! <run>/config.resolved  effective configuration, JSON
//! <run>/ABORTED          present only when the run was aborted
//! ```
//!
//! Wall-clock times are kept out of `history.jsonl` so that two runs with
//! the same seed produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::history::{EvalRecord, FailureRecord, History};
use crate::space::{ParamPoint, SearchSpace};

pub const HISTORY_FILE: &str = "history.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";
pub const TRACE_FILE: &str = "trace.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.resolved";
pub const ABORTED_FILE: &str = "ABORTED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryLine {
    pub iteration: u64,
    pub params: Map<String, Value>,
    pub score: f64,
    pub objective_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureLine {
    pub iteration: u64,
    pub params: Map<String, Value>,
    pub kind: String,
    pub message: String,
}

/// `{"m": 3, "n": 140, ...}` in space order.
pub fn params_map(space: &SearchSpace, point: &ParamPoint) -> Map<String, Value> {
    space
        .names()
        .zip(point.values())
        .map(|(n, v)| (n.to_string(), Value::from(*v)))
        .collect()
}

/// Inverse of [`params_map`]; names must match the space exactly and in order.
pub fn point_from_params(
    space: &SearchSpace,
    params: &Map<String, Value>,
) -> Result<ParamPoint, String> {
    let names: Vec<&str> = space.names().collect();
    let keys: Vec<&str> = params.keys().map(String::as_str).collect();
    if keys != names {
        return Err(format!("params {keys:?} do not match space {names:?}"));
    }
    params
        .values()
        .map(|v| {
            v.as_i64()
                .ok_or_else(|| format!("parameter value {v} is not an integer"))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(ParamPoint)
}

pub fn history_jsonl(space: &SearchSpace, history: &History) -> String {
    let mut out = String::new();
    for r in &history.records {
        let line = HistoryLine {
            iteration: r.iteration,
            params: params_map(space, &r.point),
            score: r.score,
            objective_id: r.objective_id.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn failures_jsonl(space: &SearchSpace, history: &History) -> String {
    let mut out = String::new();
    for f in &history.failures {
        let line = FailureLine {
            iteration: f.iteration,
            params: params_map(space, &f.point),
            kind: f.kind.clone(),
            message: f.message.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn trace_csv(history: &History) -> String {
    let mut out = String::from("iteration,score,best_so_far\n");
    for (r, best) in history.records.iter().zip(history.best_so_far()) {
        let _ = writeln!(out, "{},{},{}", r.iteration, r.score, best);
    }
    out
}

pub fn timing_csv(history: &History) -> String {
    let mut out = String::from("iteration,wall_time_s\n");
    for r in &history.records {
        let _ = writeln!(out, "{},{}", r.iteration, r.wall_time);
    }
    out
}

/// Read `history.jsonl` and `failures.jsonl` (optional) back into a
/// [`History`]. Wall times are not persisted there and come back as zero.
pub fn read_history(dir: &Path, space: &SearchSpace) -> Result<History, String> {
    let mut history = History::new();
    let text = fs::read_to_string(dir.join(HISTORY_FILE))
        .map_err(|e| format!("{}: {e}", dir.join(HISTORY_FILE).display()))?;
    let mut records = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let h: HistoryLine = serde_json::from_str(line)
            .map_err(|e| format!("{HISTORY_FILE} line {}: {e}", i + 1))?;
        let point = point_from_params(space, &h.params)
            .map_err(|e| format!("{HISTORY_FILE} line {}: {e}", i + 1))?;
        records.push(EvalRecord {
            iteration: h.iteration,
            point,
            score: h.score,
            wall_time: 0.0,
            objective_id: h.objective_id,
        });
    }
    let mut failures = Vec::new();
    let fpath = dir.join(FAILURES_FILE);
    if fpath.exists() {
        let text = fs::read_to_string(&fpath).map_err(|e| format!("{}: {e}", fpath.display()))?;
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let f: FailureLine = serde_json::from_str(line)
                .map_err(|e| format!("{FAILURES_FILE} line {}: {e}", i + 1))?;
            let point = point_from_params(space, &f.params)
                .map_err(|e| format!("{FAILURES_FILE} line {}: {e}", i + 1))?;
            failures.push(FailureRecord {
                iteration: f.iteration,
                point,
                kind: f.kind,
                message: f.message,
            });
        }
    }
    // merge by iteration so ordering errors surface as history errors
    let mut ri = records.into_iter().peekable();
    let mut fi = failures.into_iter().peekable();
    loop {
        let take_record = match (ri.peek(), fi.peek()) {
            (Some(r), Some(f)) => r.iteration < f.iteration,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        let pushed = if take_record {
            history.push_record(ri.next().expect("peeked"))
        } else {
            history.push_failure(fi.next().expect("peeked"))
        };
        pushed.map_err(|e| e.to_string())?;
    }
    Ok(history)
}

/// Parse `trace.csv` into `(iteration, score, best_so_far)` rows.
pub fn read_trace(path: &Path) -> Result<Vec<(u64, f64, f64)>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some("iteration,score,best_so_far") {
        return Err(format!("{}: unexpected header", path.display()));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let bad = || format!("{} line {}: malformed row `{l}`", path.display(), i + 2);
            let mut f = l.split(',');
            let it = f.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let s = f.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let b = f.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            if f.next().is_some() {
                return Err(bad());
            }
            Ok((it, s, b))
        })
        .collect()
}

/// Create `<parent>/<stem>`, or `<stem>-2`, `<stem>-3`, ... if taken.
pub fn create_unique_dir(parent: &Path, stem: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(parent)?;
    for n in 1.. {
        let name = if n == 1 {
            stem.to_string()
        } else {
            format!("{stem}-{n}")
        };
        let dir = parent.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!("unbounded suffix search")
}

/// Filesystem-safe UTC timestamp with millisecond resolution.
pub fn timestamp() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string()
}
