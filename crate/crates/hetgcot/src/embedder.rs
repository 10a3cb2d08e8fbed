//! Text embedders backed by the environment.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use hetgcot_core::features::{EmbedError, HashEmbedder, TextEmbedder};
use serde_json::json;

use crate::config::{EmbedderConfig, EmbedderKind};

/// A long-lived child process. For each text it receives one line
/// `{"text": "..."}` on stdin and must answer with one line holding a JSON
/// array of `dim` numbers.
pub struct ExternalEmbedder {
    dim: usize,
    io: Mutex<(ChildStdin, BufReader<ChildStdout>)>,
    child: Child,
}

impl ExternalEmbedder {
    pub fn spawn(command: &[String], dim: usize) -> Result<Self> {
        let (program, args) = command.split_first().context("empty embedder command")?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .with_context(|| format!("cannot start embedder {program:?}"))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            dim,
            io: Mutex::new((stdin, stdout)),
            child,
        })
    }
}

impl TextEmbedder for ExternalEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut io = self.io.lock().map_err(|_| EmbedError("embedder lock poisoned".into()))?;
        let (stdin, stdout) = &mut *io;
        let request = json!({ "text": text }).to_string();
        writeln!(stdin, "{request}")
            .and_then(|_| stdin.flush())
            .map_err(|e| EmbedError(format!("write to embedder: {e}")))?;
        let mut line = String::new();
        let n = stdout
            .read_line(&mut line)
            .map_err(|e| EmbedError(format!("read from embedder: {e}")))?;
        if n == 0 {
            return Err(EmbedError("embedder closed its output".into()));
        }
        let v: Vec<f64> = serde_json::from_str(line.trim()).map_err(|e| EmbedError(format!("bad embedder reply: {e}")))?;
        if v.len() != self.dim {
            return Err(EmbedError(format!("embedder returned {} values, expected {}", v.len(), self.dim)));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError("embedder returned a non-finite value".into()));
        }
        Ok(v)
    }
}

impl Drop for ExternalEmbedder {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn from_config(c: &EmbedderConfig, seed: u64) -> Result<Box<dyn TextEmbedder>> {
    match c.kind {
        EmbedderKind::Test => Ok(Box::new(HashEmbedder::new(c.dim, seed))),
        EmbedderKind::External => {
            if c.command.is_empty() {
                bail!("embedder.command is required for the external embedder");
            }
            Ok(Box::new(ExternalEmbedder::spawn(&c.command, c.dim)?))
        }
    }
}
