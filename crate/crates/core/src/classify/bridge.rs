//! Client for external classifiers speaking newline-delimited JSON.
//!
//! Framing is one UTF-8 JSON object per `\n`-terminated line, over a child
//! process's stdin/stdout or a TCP stream.
//!
//! ```text
//! client → {"proto":1,"labels":["A","B"]}
//! server → {"proto":1,"labels":["A","B"]}
//! client → {"id":0,"text":"..."}
//! server → {"id":0,"label":"B","scores":[0.1,0.9]}   or   {"id":0,"error":"..."}
//! ```
//!
//! Responses may arrive in any order and are matched by id. The client keeps at
//! most `window` requests in flight; a request that sees no response within
//! `timeout` is reported as [`BridgeFailure::Timeout`] and the batch continues.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub proto: u32,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Response {
    pub id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BridgeEndpoint {
    /// Spawn a program and talk over its stdin/stdout.
    Process { program: String, args: Vec<String> },
    /// `host:port`.
    Tcp(String),
}

impl std::str::FromStr for BridgeEndpoint {
    type Err = Error;

    /// `tcp://host:port`, or a whitespace-separated command line.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            return Ok(Self::Tcp(addr.to_string()));
        }
        let mut parts = s.split_whitespace().map(String::from);
        let program = parts.next().ok_or_else(|| Error::invalid("empty bridge endpoint"))?;
        Ok(Self::Process {
            program,
            args: parts.collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeConfig {
    pub timeout_secs: f64,
    pub window: usize,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            timeout_secs: 30.0,
            window: 32,
        }
    }
}

impl BridgeConfig {
    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeResponse {
    pub class: usize,
    pub label: String,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BridgeFailure {
    Timeout,
    Remote(String),
}

impl std::fmt::Display for BridgeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BridgeFailure::Timeout => f.write_str("timed out"),
            BridgeFailure::Remote(msg) => write!(f, "bridge error: {msg}"),
        }
    }
}

pub type BridgeOutcome = std::result::Result<BridgeResponse, BridgeFailure>;

pub struct BridgeClient {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    labels: Vec<String>,
    cfg: BridgeConfig,
    next_id: u64,
    expired: HashSet<u64>,
    child: Option<Child>,
}

fn spawn_reader<R: io::Read + Send + 'static>(reader: R) -> Receiver<io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(reader).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    rx
}

impl BridgeClient {
    /// Connect and exchange handshakes. The server must echo protocol version 1
    /// and exactly the same label list.
    pub fn connect(endpoint: &BridgeEndpoint, labels: &[String], cfg: BridgeConfig) -> Result<Self> {
        if cfg.window == 0 {
            return Err(Error::invalid("bridge window must be at least 1"));
        }
        let (writer, lines, child): (Box<dyn Write + Send>, _, _) = match endpoint {
            BridgeEndpoint::Process { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| Error::Protocol(format!("cannot start bridge {program:?}: {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                (Box::new(stdin), spawn_reader(stdout), Some(child))
            }
            BridgeEndpoint::Tcp(addr) => {
                let stream =
                    TcpStream::connect(addr).map_err(|e| Error::Protocol(format!("cannot connect to {addr}: {e}")))?;
                let reader = stream.try_clone().map_err(Error::Stream)?;
                (Box::new(stream), spawn_reader(reader), None)
            }
        };
        let mut client = Self {
            writer,
            lines,
            labels: labels.to_vec(),
            cfg,
            next_id: 0,
            expired: HashSet::new(),
            child,
        };
        client.handshake()?;
        Ok(client)
    }

    fn send<T: Serialize>(&mut self, msg: &T) -> Result<()> {
        let mut line = serde_json::to_string(msg)?;
        line.push('\n');
        self.writer.write_all(line.as_bytes()).map_err(Error::Stream)?;
        self.writer.flush().map_err(Error::Stream)
    }

    fn handshake(&mut self) -> Result<()> {
        self.send(&Handshake {
            proto: PROTOCOL_VERSION,
            labels: self.labels.clone(),
        })?;
        let line = match self.lines.recv_timeout(self.cfg.timeout()) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(Error::Stream(e)),
            Err(_) => return Err(Error::Protocol("no handshake from bridge".into())),
        };
        let reply: Handshake =
            serde_json::from_str(&line).map_err(|e| Error::Protocol(format!("bad handshake {line:?}: {e}")))?;
        if reply.proto != PROTOCOL_VERSION {
            return Err(Error::Protocol(format!("bridge speaks protocol {}, expected {PROTOCOL_VERSION}", reply.proto)));
        }
        if reply.labels != self.labels {
            return Err(Error::Protocol(format!(
                "bridge label set {:?} differs from engine labels {:?}",
                reply.labels, self.labels
            )));
        }
        Ok(())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Classify every text; the result is in input order.
    ///
    /// Unknown labels, malformed lines and unexpected ids are protocol errors
    /// that abort the batch. Timeouts and server-side errors fail only their record.
    pub fn classify<S: AsRef<str>>(&mut self, texts: &[S]) -> Result<Vec<BridgeOutcome>> {
        let mut results: Vec<Option<BridgeOutcome>> = vec![None; texts.len()];
        let mut pending: BTreeMap<u64, (usize, Instant)> = BTreeMap::new();
        let mut next = 0;
        let timeout = self.cfg.timeout();
        loop {
            while pending.len() < self.cfg.window && next < texts.len() {
                let id = self.next_id;
                self.next_id += 1;
                self.send(&Request {
                    id,
                    text: texts[next].as_ref().to_string(),
                })?;
                pending.insert(id, (next, Instant::now() + timeout));
                next += 1;
            }
            let Some(deadline) = pending.values().map(|(_, d)| *d).min() else { break };
            match self.lines.recv_timeout(deadline.saturating_duration_since(Instant::now())) {
                Ok(Ok(line)) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let resp: Response = serde_json::from_str(&line)
                        .map_err(|e| Error::Protocol(format!("malformed response {line:?}: {e}")))?;
                    let id = resp
                        .id
                        .ok_or_else(|| Error::Protocol(format!("response without id: {line:?}")))?;
                    let Some((idx, _)) = pending.remove(&id) else {
                        if self.expired.remove(&id) {
                            continue;
                        }
                        return Err(Error::Protocol(format!("response for unknown or repeated id {id}")));
                    };
                    results[idx] = Some(self.decode(resp)?);
                }
                Ok(Err(e)) => return Err(Error::Stream(e)),
                Err(RecvTimeoutError::Timeout) => {
                    let now = Instant::now();
                    let late: Vec<u64> = pending.iter().filter(|(_, (_, d))| *d <= now).map(|(id, _)| *id).collect();
                    for id in late {
                        let (idx, _) = pending.remove(&id).unwrap();
                        results[idx] = Some(Err(BridgeFailure::Timeout));
                        self.expired.insert(id);
                    }
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Protocol(format!(
                        "bridge closed the stream with {} requests outstanding",
                        pending.len() + texts.len() - next
                    )));
                }
            }
        }
        Ok(results.into_iter().map(|r| r.expect("every request resolved")).collect())
    }

    fn decode(&self, resp: Response) -> Result<BridgeOutcome> {
        if let Some(msg) = resp.error {
            return Ok(Err(BridgeFailure::Remote(msg)));
        }
        let label = resp
            .label
            .ok_or_else(|| Error::Protocol("response has neither label nor error".into()))?;
        let class = self
            .labels
            .iter()
            .position(|l| *l == label)
            .ok_or_else(|| Error::Protocol(format!("bridge returned unknown label {label:?}")))?;
        let scores = resp.scores.unwrap_or_default();
        if scores.len() != self.labels.len() || scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Protocol(format!(
                "expected {} finite scores, got {:?}",
                self.labels.len(),
                scores
            )));
        }
        Ok(Ok(BridgeResponse { class, label, scores }))
    }
}

impl Drop for BridgeClient {
    fn drop(&mut self) {
        self.writer = Box::new(io::sink());
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Scripted echo server used as a stand-in for external classifiers in tests
/// and demos.
///
/// Each request text may carry directives: `label=NAME` answers with `NAME`
/// (even if it is not in the label set), `error` answers with an error
/// response and `silent` never answers. Otherwise the label is
/// `labels[id % labels.len()]`. Scores are one-hot on the chosen label.
/// Responses are buffered and released in reverse order whenever `reorder` are
/// queued or no request arrives for a few milliseconds.
pub mod fixture {
    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub struct EchoScript {
        pub reorder: usize,
    }

    impl Default for EchoScript {
        fn default() -> Self {
            Self { reorder: 4 }
        }
    }

    fn answer(labels: &[String], line: &str) -> Option<Response> {
        let req: Request = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_u64()));
                return Some(Response {
                    id,
                    error: Some(format!("malformed request: {e}")),
                    ..Response::default()
                });
            }
        };
        let words: Vec<&str> = req.text.split_whitespace().collect();
        if words.contains(&"silent") {
            return None;
        }
        if words.contains(&"error") {
            return Some(Response {
                id: Some(req.id),
                error: Some("scripted failure".into()),
                ..Response::default()
            });
        }
        let label = words
            .iter()
            .find_map(|w| w.strip_prefix("label="))
            .map(|l| l.replace('_', " "))
            .unwrap_or_else(|| labels[req.id as usize % labels.len()].clone());
        let scores = labels.iter().map(|l| if *l == label { 1.0 } else { 0.0 }).collect();
        Some(Response {
            id: Some(req.id),
            label: Some(label),
            scores: Some(scores),
            error: None,
        })
    }

    /// Serve one connection until the reader closes.
    pub fn serve_echo<R, W>(reader: R, mut writer: W, labels: &[String], script: EchoScript) -> io::Result<()>
    where
        R: io::Read + Send + 'static,
        W: Write,
    {
        let lines = spawn_reader(reader);
        let handshake = match lines.recv() {
            Ok(line) => line?,
            Err(_) => return Ok(()),
        };
        let _: Handshake = serde_json::from_str(&handshake).map_err(io::Error::other)?;
        let reply = Handshake {
            proto: PROTOCOL_VERSION,
            labels: labels.to_vec(),
        };
        writeln!(writer, "{}", serde_json::to_string(&reply)?)?;
        writer.flush()?;
        let mut queue: Vec<Response> = Vec::new();
        let flush = |queue: &mut Vec<Response>, writer: &mut W| -> io::Result<()> {
            for r in queue.drain(..).rev() {
                writeln!(writer, "{}", serde_json::to_string(&r)?)?;
            }
            writer.flush()
        };
        loop {
            match lines.recv_timeout(Duration::from_millis(5)) {
                Ok(line) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    if let Some(r) = answer(labels, &line) {
                        queue.push(r);
                    }
                    if queue.len() >= script.reorder.max(1) {
                        flush(&mut queue, &mut writer)?;
                    }
                }
                Err(RecvTimeoutError::Timeout) => flush(&mut queue, &mut writer)?,
                Err(RecvTimeoutError::Disconnected) => return flush(&mut queue, &mut writer),
            }
        }
    }
}
