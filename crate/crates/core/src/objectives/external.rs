//! Newline-delimited JSON protocol to a child process.
//!
//! Request: `{"id":<int>,"params":{"m":<int>,...}}`, one per line on the
//! child's stdin. Response: `{"id":<int>,"score":<float>}` or
//! `{"id":<int>,"error":"<msg>"}` on stdout. At the end of a run the child
//! receives [`SHUTDOWN_LINE`].
//!
//! One request is in flight at a time. After a timeout, an id mismatch or a
//! dead pipe the child is killed and a fresh one is spawned on the next
//! request; a malformed line or an error response keeps the child.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{EvalError, Objective};
use crate::space::ParamPoint;

pub const SHUTDOWN_LINE: &str = r#"{"cmd":"shutdown"}"#;

const SHUTDOWN_GRACE: Duration = Duration::from_secs(5);

/// Wire form of a request; `params` keeps space order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub id: u64,
    pub params: Map<String, Value>,
}

impl EvalRequest {
    pub fn new(id: u64, names: &[String], point: &ParamPoint) -> Self {
        let params = names
            .iter()
            .zip(point.values())
            .map(|(n, v)| (n.clone(), Value::from(*v)))
            .collect();
        Self { id, params }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request is always serializable")
    }
}

/// Wire form of a response.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalResponse {
    Score { id: u64, score: f64 },
    Error { id: u64, message: String },
}

impl EvalResponse {
    pub fn id(&self) -> u64 {
        match self {
            EvalResponse::Score { id, .. } | EvalResponse::Error { id, .. } => *id,
        }
    }

    pub fn to_line(&self) -> String {
        match self {
            EvalResponse::Score { id, score } => serde_json::json!({"id": id, "score": score}),
            EvalResponse::Error { id, message } => {
                serde_json::json!({"id": id, "error": message})
            }
        }
        .to_string()
    }

    pub fn parse(line: &str) -> Result<Self, EvalError> {
        let value: Value = serde_json::from_str(line)
            .map_err(|e| EvalError::Malformed(format!("{e}: {}", truncate(line))))?;
        let obj = value
            .as_object()
            .ok_or_else(|| EvalError::Malformed(format!("not an object: {}", truncate(line))))?;
        let id = obj.get("id").and_then(Value::as_u64).ok_or_else(|| {
            EvalError::Malformed(format!("missing integer id: {}", truncate(line)))
        })?;
        if let Some(score) = obj.get("score") {
            let score = score.as_f64().filter(|s| s.is_finite()).ok_or_else(|| {
                EvalError::Malformed(format!("score is not a finite number: {score}"))
            })?;
            return Ok(EvalResponse::Score { id, score });
        }
        if let Some(err) = obj.get("error") {
            let message = match err {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            return Ok(EvalResponse::Error { id, message });
        }
        Err(EvalError::Malformed(format!(
            "neither score nor error: {}",
            truncate(line)
        )))
    }
}

fn truncate(line: &str) -> String {
    const MAX: usize = 200;
    if line.len() <= MAX {
        line.to_string()
    } else {
        let mut end = MAX;
        while !line.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &line[..end])
    }
}

struct Channel {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
}

impl Channel {
    fn spawn(command: &[String]) -> Result<Self, EvalError> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| EvalError::Spawn(format!("{}: {e}", command[0])))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
        })
    }

    fn send(&mut self, line: &str) -> std::io::Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| std::io::Error::from(std::io::ErrorKind::BrokenPipe))?;
        stdin.write_all(line.as_bytes())?;
        stdin.write_all(b"\n")?;
        stdin.flush()
    }

    fn exit_description(&mut self) -> String {
        match self.child.wait() {
            Ok(status) => status.to_string(),
            Err(e) => e.to_string(),
        }
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn shutdown(mut self) {
        let _ = self.send(SHUTDOWN_LINE);
        drop(self.stdin.take());
        let deadline = Instant::now() + SHUTDOWN_GRACE;
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                _ => {
                    self.kill();
                    return;
                }
            }
        }
    }
}

/// Objective evaluated by a long-lived child process.
pub struct ExternalObjective {
    command: Vec<String>,
    names: Vec<String>,
    timeout: Duration,
    label: String,
    next_id: u64,
    channel: Option<Channel>,
    spawns: usize,
}

impl ExternalObjective {
    pub fn new(command: Vec<String>, names: Vec<String>, timeout: Duration) -> Self {
        let label = format!("external:{}", command.join(" "));
        Self {
            command,
            names,
            timeout,
            label,
            next_id: 0,
            channel: None,
            spawns: 0,
        }
    }

    /// How many child processes have been started so far.
    pub fn spawn_count(&self) -> usize {
        self.spawns
    }

    fn channel(&mut self) -> Result<&mut Channel, EvalError> {
        if self.channel.is_none() {
            if self.command.is_empty() {
                return Err(EvalError::Spawn("empty command".into()));
            }
            self.channel = Some(Channel::spawn(&self.command)?);
            self.spawns += 1;
        }
        Ok(self.channel.as_mut().expect("just spawned"))
    }

    fn drop_channel(&mut self) {
        if let Some(c) = self.channel.take() {
            c.kill();
        }
    }

    fn await_response(&mut self, id: u64) -> Result<EvalResponse, EvalError> {
        let deadline = Instant::now() + self.timeout;
        let channel = self.channel.as_mut().expect("channel open");
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match channel.lines.recv_timeout(remaining) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => {
                    let resp = EvalResponse::parse(line.trim())?;
                    if resp.id() != id {
                        self.drop_channel();
                        return Err(EvalError::IdMismatch {
                            expected: id,
                            got: resp.id(),
                        });
                    }
                    return Ok(resp);
                }
                Ok(Err(e)) => {
                    self.drop_channel();
                    return Err(EvalError::Io(e.to_string()));
                }
                Err(RecvTimeoutError::Timeout) => {
                    self.drop_channel();
                    return Err(EvalError::Timeout(self.timeout));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    let mut ch = self.channel.take().expect("channel open");
                    return Err(EvalError::ProcessExited(ch.exit_description()));
                }
            }
        }
    }
}

impl Objective for ExternalObjective {
    fn id(&self) -> &str {
        &self.label
    }

    fn evaluate(&mut self, point: &ParamPoint) -> Result<f64, EvalError> {
        if point.len() != self.names.len() {
            return Err(EvalError::Other(format!(
                "point has {} coordinates, objective expects {}",
                point.len(),
                self.names.len()
            )));
        }
        let id = self.next_id;
        self.next_id += 1;
        let line = EvalRequest::new(id, &self.names, point).to_line();
        if let Err(e) = self.channel()?.send(&line) {
            let mut ch = self.channel.take().expect("channel open");
            let status = match ch.child.try_wait() {
                Ok(Some(s)) => s.to_string(),
                _ => {
                    let _ = ch.child.kill();
                    ch.exit_description()
                }
            };
            return Err(EvalError::ProcessExited(format!("{e} ({status})")));
        }
        match self.await_response(id)? {
            EvalResponse::Score { score, .. } => Ok(score),
            EvalResponse::Error { message, .. } => Err(EvalError::Remote(message)),
        }
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn shutdown(&mut self) {
        if let Some(c) = self.channel.take() {
            c.shutdown();
        }
    }
}

impl Drop for ExternalObjective {
    fn drop(&mut self) {
        self.shutdown();
    }
}
