//! Out-of-process execution of candidate code.
//!
//! Each [`Worker`] is a Python interpreter running the embedded worker
//! script. Requests and responses are length-prefixed JSON frames on the
//! worker's stdin/stdout; a reader thread forwards responses so every
//! request can be bounded by a wall-clock timeout. A worker that times out
//! is killed; [`CandidateSession`] transparently starts a fresh one for the
//! next request.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value as Json};

use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u64 = 1;
pub const WORKER_SOURCE: &str = include_str!("worker.py");
const STDERR_TAIL: usize = 4096;

/// How to start the host interpreter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PythonRuntime {
    pub interpreter: PathBuf,
}

impl Default for PythonRuntime {
    fn default() -> Self {
        let interpreter = std::env::var_os("PYTHONESS_PYTHON")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("python3"));
        PythonRuntime { interpreter }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkerFailure {
    Timeout,
    Died(String),
}

/// A decoded response frame. Fields are populated depending on `status`.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct Response {
    pub status: String,
    #[serde(default)]
    pub observed: Option<String>,
    #[serde(default)]
    pub expected: Option<String>,
    #[serde(default)]
    pub message: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub value: Option<Json>,
    #[serde(default)]
    pub repr: Option<String>,
    #[serde(default)]
    pub ran: Option<u64>,
    #[serde(default)]
    pub failures: Option<Vec<SuiteCaseFailure>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, serde::Serialize)]
pub struct SuiteCaseFailure {
    pub test: String,
    pub detail: String,
}

pub struct Worker {
    child: Child,
    stdin: Option<ChildStdin>,
    frames: Receiver<Option<Vec<u8>>>,
    stderr: Arc<Mutex<VecDeque<u8>>>,
}

impl Worker {
    pub fn spawn(runtime: &PythonRuntime) -> Result<Worker> {
        let mut child = Command::new(&runtime.interpreter)
            .arg("-I")
            .arg("-u")
            .arg("-c")
            .arg(WORKER_SOURCE)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| {
                Error::Worker(format!(
                    "cannot start {}: {e}",
                    runtime.interpreter.display()
                ))
            })?;
        let stdin = child.stdin.take();
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr_pipe = child.stderr.take().expect("piped stderr");

        let (tx, frames) = mpsc::channel();
        thread::spawn(move || loop {
            let mut header = [0u8; 4];
            if stdout.read_exact(&mut header).is_err() {
                let _ = tx.send(None);
                return;
            }
            let mut body = vec![0u8; u32::from_be_bytes(header) as usize];
            if stdout.read_exact(&mut body).is_err() || tx.send(Some(body)).is_err() {
                let _ = tx.send(None);
                return;
            }
        });

        let stderr = Arc::new(Mutex::new(VecDeque::new()));
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut buf = [0u8; 1024];
            while let Ok(n) = stderr_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut tail = sink.lock().unwrap();
                tail.extend(&buf[..n]);
                while tail.len() > STDERR_TAIL {
                    tail.pop_front();
                }
            }
        });

        Ok(Worker {
            child,
            stdin,
            frames,
            stderr,
        })
    }

    pub fn request(&mut self, mut req: Json, timeout: Duration) -> Result<Response, WorkerFailure> {
        req["v"] = json!(PROTOCOL_VERSION);
        let body = serde_json::to_vec(&req).expect("requests serialize");
        let written = self.stdin.as_mut().map(|stdin| {
            stdin
                .write_all(&(body.len() as u32).to_be_bytes())
                .and_then(|_| stdin.write_all(&body))
                .and_then(|_| stdin.flush())
        });
        if !matches!(written, Some(Ok(()))) {
            return Err(WorkerFailure::Died(self.death_notice()));
        }
        match self.frames.recv_timeout(timeout) {
            Ok(Some(frame)) => {
                let resp: Json = serde_json::from_slice(&frame)
                    .map_err(|e| WorkerFailure::Died(format!("malformed worker frame: {e}")))?;
                if resp.get("v").and_then(Json::as_u64) != Some(PROTOCOL_VERSION) {
                    return Err(WorkerFailure::Died("worker protocol version mismatch".into()));
                }
                serde_json::from_value(resp)
                    .map_err(|e| WorkerFailure::Died(format!("malformed worker response: {e}")))
            }
            Ok(None) | Err(RecvTimeoutError::Disconnected) => {
                Err(WorkerFailure::Died(self.death_notice()))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                Err(WorkerFailure::Timeout)
            }
        }
    }

    fn death_notice(&mut self) -> String {
        // give the stderr reader a moment to drain
        let status = (0..50).find_map(|_| match self.child.try_wait() {
            Ok(Some(s)) => Some(s.to_string()),
            _ => {
                thread::sleep(Duration::from_millis(10));
                None
            }
        });
        let tail: Vec<u8> = self.stderr.lock().unwrap().iter().copied().collect();
        let tail = String::from_utf8_lossy(&tail);
        let last = tail.trim().lines().last().unwrap_or("").to_string();
        match status {
            Some(s) if last.is_empty() => format!("worker process exited ({s})"),
            Some(s) => format!("worker process exited ({s}): {last}"),
            None => "worker process stopped responding".to_string(),
        }
    }

    pub fn kill(&mut self) {
        self.stdin.take();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.kill();
    }
}

/// A candidate loaded into a worker, restarted on demand after a timeout or crash.
pub struct CandidateSession {
    runtime: PythonRuntime,
    load: Json,
    worker: Option<Worker>,
}

impl CandidateSession {
    pub fn new(runtime: &PythonRuntime, source: &str, name: &str, returns: Option<Json>) -> Self {
        CandidateSession {
            runtime: runtime.clone(),
            load: json!({"op": "load", "source": source, "name": name, "returns": returns}),
            worker: None,
        }
    }

    /// Starts a worker and loads the candidate. `Ok(Err(msg))` means the
    /// candidate itself raised while loading.
    pub fn start(&mut self, timeout: Duration) -> Result<std::result::Result<(), String>, WorkerFailure> {
        self.worker = None;
        let mut worker = Worker::spawn(&self.runtime).map_err(|e| WorkerFailure::Died(e.to_string()))?;
        let resp = worker.request(self.load.clone(), timeout)?;
        if resp.status == "ok" {
            self.worker = Some(worker);
            Ok(Ok(()))
        } else {
            Ok(Err(resp.error.unwrap_or_else(|| "candidate failed to load".into())))
        }
    }

    pub fn request(&mut self, req: Json, timeout: Duration) -> Result<Response, WorkerFailure> {
        let started = std::time::Instant::now();
        if self.worker.is_none() {
            if let Err(msg) = self.start(timeout)? {
                return Err(WorkerFailure::Died(msg));
            }
        }
        let remaining = timeout.saturating_sub(started.elapsed());
        let worker = self.worker.as_mut().expect("started above");
        let result = worker.request(req, remaining);
        if result.is_err() {
            self.worker = None;
        }
        result
    }
}
