//! Child-process detector speaking newline-delimited JSON.
//!
//! For every patch the adapter writes `patch_{index}_{u0}_{v0}.ppm` into a
//! run-scoped directory and sends one request line on the child's stdin:
//!
//! ```text
//! {"patch_path":"/tmp/.../patch_3_1080_966.ppm","origin":[1080,966],"width":1200,"height":600}
//! ```
//!
//! The child answers each request, in order, with one line:
//!
//! ```text
//! {"detections":[{"class":"face","box":[x0,y0,x1,y1],"score":0.87}]}
//! ```
//!
//! Boxes are patch-local. Any malformed line, out-of-bounds box, bad score,
//! early exit or missed deadline is an error; the worker that produced it is
//! killed and replaced on the next request.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{DetectionRecord, Detector, DetectorError};
use crate::io::encode_ppm;
use crate::tiler::Patch;

/// Overrides the parent directory of the per-run patch directory.
pub const TMPDIR_ENV: &str = "PANO_REDUCE_TMPDIR";

fn default_parallelism() -> usize {
    1
}

fn default_timeout() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalDetectorConfig {
    /// Program and arguments.
    pub command: Vec<String>,
    #[serde(default = "default_parallelism")]
    pub max_parallelism: usize,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

impl ExternalDetectorConfig {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            max_parallelism: default_parallelism(),
            timeout_s: default_timeout(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.command.is_empty() || self.command[0].is_empty() {
            return Err("command must name a program".into());
        }
        if self.max_parallelism == 0 {
            return Err("max_parallelism must be at least 1".into());
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(format!("timeout_s must be positive, got {}", self.timeout_s));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchRequest {
    pub patch_path: PathBuf,
    pub origin: [usize; 2],
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchResponse {
    pub detections: Vec<DetectionRecord>,
}

impl PatchResponse {
    /// Parses and contract-checks one response line for a `width × height`
    /// patch.
    pub fn parse(line: &str, width: usize, height: usize) -> Result<Self, DetectorError> {
        let violation = |reason: String| DetectorError::Protocol {
            line: line.to_string(),
            reason,
        };
        let response: PatchResponse = serde_json::from_str(line.trim_end()).map_err(|e| violation(e.to_string()))?;
        for (i, d) in response.detections.iter().enumerate() {
            d.check_local(width as f64, height as f64)
                .map_err(|r| violation(format!("detections[{i}]: {r}")))?;
        }
        Ok(response)
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(command: &[String]) -> Result<Self, DetectorError> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(DetectorError::Spawn)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Ok(Self { child, stdin, lines })
    }

    fn exit_status(&mut self) -> String {
        // Give a child that just closed stdout a moment to be reaped.
        for _ in 0..50 {
            if let Ok(Some(status)) = self.child.try_wait() {
                return status.to_string();
            }
            std::thread::sleep(Duration::from_millis(2));
        }
        "stdout closed".to_string()
    }

    fn round_trip(&mut self, request: &str, timeout: Duration) -> Result<String, DetectorError> {
        let sent = self
            .stdin
            .write_all(request.as_bytes())
            .and_then(|_| self.stdin.write_all(b"\n"))
            .and_then(|_| self.stdin.flush());
        if let Err(e) = sent {
            return Err(match self.child.try_wait() {
                Ok(Some(status)) => DetectorError::Exited {
                    status: status.to_string(),
                },
                _ => DetectorError::Io(e),
            });
        }
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(DetectorError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(DetectorError::Timeout {
                seconds: timeout.as_secs_f64(),
            }),
            Err(RecvTimeoutError::Disconnected) => Err(DetectorError::Exited {
                status: self.exit_status(),
            }),
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct Pool {
    idle: Vec<Worker>,
    live: usize,
}

/// Detector backed by up to `max_parallelism` child processes.
pub struct ExternalDetector {
    config: ExternalDetectorConfig,
    patch_dir: tempfile::TempDir,
    pool: Mutex<Pool>,
    available: Condvar,
}

impl ExternalDetector {
    /// Creates the adapter and its patch directory under `$PANO_REDUCE_TMPDIR`
    /// (or the system temp dir). Workers start lazily.
    pub fn new(config: ExternalDetectorConfig) -> Result<Self, DetectorError> {
        config.validate().map_err(|reason| DetectorError::Protocol {
            line: String::new(),
            reason,
        })?;
        let builder = {
            let mut b = tempfile::Builder::new();
            b.prefix("pano-reduce-patches-");
            b
        };
        let patch_dir = match std::env::var_os(TMPDIR_ENV) {
            Some(dir) => {
                std::fs::create_dir_all(&dir).map_err(DetectorError::Io)?;
                builder.tempdir_in(dir)
            }
            None => builder.tempdir(),
        }
        .map_err(DetectorError::Io)?;
        Ok(Self {
            config,
            patch_dir,
            pool: Mutex::new(Pool {
                idle: Vec::new(),
                live: 0,
            }),
            available: Condvar::new(),
        })
    }

    pub fn patch_dir(&self) -> &Path {
        self.patch_dir.path()
    }

    fn acquire(&self) -> Result<Worker, DetectorError> {
        let mut pool = self.pool.lock().expect("pool lock");
        loop {
            if let Some(worker) = pool.idle.pop() {
                return Ok(worker);
            }
            if pool.live < self.config.max_parallelism {
                pool.live += 1;
                drop(pool);
                let spawned = Worker::spawn(&self.config.command);
                if spawned.is_err() {
                    self.retire();
                }
                return spawned;
            }
            pool = self.available.wait(pool).expect("pool lock");
        }
    }

    fn release(&self, worker: Worker) {
        self.pool.lock().expect("pool lock").idle.push(worker);
        self.available.notify_one();
    }

    fn retire(&self) {
        self.pool.lock().expect("pool lock").live -= 1;
        self.available.notify_one();
    }
}

impl Detector for ExternalDetector {
    fn detect(&self, patch: &Patch) -> Result<Vec<DetectionRecord>, DetectorError> {
        let path = self.patch_dir.path().join(patch.file_name());
        std::fs::write(&path, encode_ppm(&patch.pixels)).map_err(DetectorError::Io)?;
        let request = serde_json::to_string(&PatchRequest {
            patch_path: path,
            origin: [patch.origin_u, patch.origin_v],
            width: patch.width,
            height: patch.height,
        })
        .expect("request serializes");

        let mut worker = self.acquire()?;
        let timeout = Duration::from_secs_f64(self.config.timeout_s);
        let outcome = worker
            .round_trip(&request, timeout)
            .and_then(|line| PatchResponse::parse(&line, patch.width, patch.height));
        match outcome {
            Ok(response) => {
                self.release(worker);
                Ok(response.detections)
            }
            Err(e) => {
                drop(worker);
                self.retire();
                Err(e)
            }
        }
    }

    fn max_parallelism(&self) -> Option<usize> {
        Some(self.config.max_parallelism)
    }
}
