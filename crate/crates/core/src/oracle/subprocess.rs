//! External-oracle subprocess protocol, version 1.
//!
//! Line-delimited JSON over stdin/stdout. Requests carry token ids under a
//! shared vocabulary (one token per line in a vocab file, line number =
//! id): `{"v":1,"op":"greedy","context":[...],"arg":max_new}` or
//! `{"v":1,"op":"logprob","context":[...],"continuation":[...]}`.
//! Responses: `{"v":1,"tokens":[...]}`, `{"v":1,"logprob":x}` or
//! `{"v":1,"error":"..."}`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::GenerationOracle;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleRequest {
    pub v: u32,
    pub op: String,
    pub context: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OracleResponse {
    pub v: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Wire {
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

/// Client side: a [`GenerationOracle`] backed by a child process speaking
/// the protocol. Token strings are mapped through the shared vocabulary;
/// unknown strings map to id 0.
pub struct SubprocessOracle {
    child: Child,
    wire: std::sync::Mutex<Wire>,
    timeout: Duration,
    vocab: Vec<String>,
    ids: std::collections::HashMap<String, u32>,
}

impl SubprocessOracle {
    pub fn spawn(command: &mut Command, vocab: Vec<String>) -> Result<Self> {
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Subprocess(format!("spawn failed: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let ids = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Self {
            child,
            wire: std::sync::Mutex::new(Wire { stdin, lines }),
            timeout: DEFAULT_TIMEOUT,
            vocab,
            ids,
        })
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| self.ids.get(t).copied().unwrap_or(0))
            .collect()
    }

    fn request(&self, req: &OracleRequest) -> Result<OracleResponse> {
        let line = serde_json::to_string(req)?;
        let wire = self.wire.lock().expect("oracle wire poisoned");
        let mut stdin = &wire.stdin;
        writeln!(stdin, "{line}")
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::Subprocess(format!("write failed: {e}")))?;
        let line = match wire.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(Error::Subprocess(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Subprocess(format!(
                    "timed out after {:?}",
                    self.timeout
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Subprocess("oracle process exited".into()))
            }
        };
        let resp: OracleResponse = serde_json::from_str(&line)?;
        if resp.v != PROTOCOL_VERSION {
            return Err(Error::Subprocess(format!(
                "protocol version mismatch: got {}, want {PROTOCOL_VERSION}",
                resp.v
            )));
        }
        if let Some(err) = resp.error {
            return Err(Error::Subprocess(err));
        }
        Ok(resp)
    }
}

impl Drop for SubprocessOracle {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl GenerationOracle for SubprocessOracle {
    fn greedy_continue(&self, context: &[String], max_new: usize) -> Result<Vec<String>> {
        let req = OracleRequest {
            v: PROTOCOL_VERSION,
            op: "greedy".into(),
            context: self.encode(context),
            arg: Some(max_new),
            continuation: None,
        };
        let resp = self.request(&req)?;
        let ids = resp
            .tokens
            .ok_or_else(|| Error::Subprocess("greedy response lacks tokens".into()))?;
        Ok(ids
            .into_iter()
            .map(|id| {
                self.vocab
                    .get(id as usize)
                    .cloned()
                    .unwrap_or_else(|| "<unk>".to_string())
            })
            .collect())
    }

    fn logprob(&self, context: &[String], continuation: &[String]) -> Result<f64> {
        let req = OracleRequest {
            v: PROTOCOL_VERSION,
            op: "logprob".into(),
            context: self.encode(context),
            arg: None,
            continuation: Some(self.encode(continuation)),
        };
        let resp = self.request(&req)?;
        resp.logprob
            .ok_or_else(|| Error::Subprocess("logprob response lacks value".into()))
    }
}

/// Server side: answer protocol requests with the built-in oracle until EOF.
/// Ids are interpreted under the oracle's own vocabulary.
pub fn serve_oracle(
    oracle: &crate::oracle::BackoffNGramOracle,
    input: impl BufRead,
    mut output: impl Write,
) -> Result<()> {
    for line in input.lines() {
        let line = line.map_err(|e| Error::Subprocess(format!("read failed: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<OracleRequest>(&line) {
            Err(e) => OracleResponse {
                v: PROTOCOL_VERSION,
                error: Some(format!("bad request: {e}")),
                ..OracleResponse::default()
            },
            Ok(req) if req.v != PROTOCOL_VERSION => OracleResponse {
                v: PROTOCOL_VERSION,
                error: Some(format!("unsupported protocol version {}", req.v)),
                ..OracleResponse::default()
            },
            Ok(req) => {
                let context: Vec<String> = req
                    .context
                    .iter()
                    .map(|&id| oracle.token(id).to_string())
                    .collect();
                match req.op.as_str() {
                    "greedy" => {
                        let max_new = req.arg.unwrap_or(0);
                        let tokens = oracle.greedy_continue(&context, max_new)?;
                        OracleResponse {
                            v: PROTOCOL_VERSION,
                            tokens: Some(
                                tokens.iter().map(|t| oracle.token_id(t)).collect(),
                            ),
                            ..OracleResponse::default()
                        }
                    }
                    "logprob" => {
                        let continuation: Vec<String> = req
                            .continuation
                            .unwrap_or_default()
                            .iter()
                            .map(|&id| oracle.token(id).to_string())
                            .collect();
                        OracleResponse {
                            v: PROTOCOL_VERSION,
                            logprob: Some(oracle.logprob(&context, &continuation)?),
                            ..OracleResponse::default()
                        }
                    }
                    op => OracleResponse {
                        v: PROTOCOL_VERSION,
                        error: Some(format!("unknown op {op:?}")),
                        ..OracleResponse::default()
                    },
                }
            }
        };
        writeln!(output, "{}", serde_json::to_string(&resp)?)
            .and_then(|_| output.flush())
            .map_err(|e| Error::Subprocess(format!("write failed: {e}")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ngram::BackoffNGramOracle;

    fn oracle() -> BackoffNGramOracle {
        let seqs: Vec<Vec<String>> = (0..3)
            .map(|_| "a b a b a b".split(' ').map(str::to_string).collect())
            .collect();
        BackoffNGramOracle::train(&seqs, 2).unwrap()
    }

    fn roundtrip(oracle: &BackoffNGramOracle, req: &OracleRequest) -> OracleResponse {
        let input = format!("{}\n", serde_json::to_string(req).unwrap());
        let mut out = Vec::new();
        serve_oracle(oracle, input.as_bytes(), &mut out).unwrap();
        serde_json::from_slice(&out).unwrap()
    }

    #[test]
    fn serve_answers_greedy_with_ids() {
        let o = oracle();
        let resp = roundtrip(
            &o,
            &OracleRequest {
                v: 1,
                op: "greedy".into(),
                context: vec![o.token_id("a")],
                arg: Some(3),
                continuation: None,
            },
        );
        let tokens: Vec<&str> = resp
            .tokens
            .unwrap()
            .iter()
            .map(|&id| o.token(id))
            .collect();
        assert_eq!(tokens, vec!["b", "a", "b"]);
    }

    #[test]
    fn serve_answers_logprob_matching_local_value() {
        let o = oracle();
        let ctx = vec!["a".to_string()];
        let cont = vec!["b".to_string(), "a".to_string()];
        let resp = roundtrip(
            &o,
            &OracleRequest {
                v: 1,
                op: "logprob".into(),
                context: ctx.iter().map(|t| o.token_id(t)).collect(),
                arg: None,
                continuation: Some(cont.iter().map(|t| o.token_id(t)).collect()),
            },
        );
        let expected = o.logprob(&ctx, &cont).unwrap();
        assert!((resp.logprob.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn bad_version_and_bad_op_return_error_records() {
        let o = oracle();
        let resp = roundtrip(
            &o,
            &OracleRequest {
                v: 99,
                op: "greedy".into(),
                context: vec![],
                arg: Some(1),
                continuation: None,
            },
        );
        assert!(resp.error.unwrap().contains("version"));
        let resp = roundtrip(
            &o,
            &OracleRequest {
                v: 1,
                op: "frobnicate".into(),
                context: vec![],
                arg: None,
                continuation: None,
            },
        );
        assert!(resp.error.unwrap().contains("unknown op"));
    }

    #[test]
    fn malformed_line_reports_instead_of_crashing() {
        let o = oracle();
        let mut out = Vec::new();
        serve_oracle(&o, "not json\n".as_bytes(), &mut out).unwrap();
        let resp: OracleResponse = serde_json::from_slice(&out).unwrap();
        assert!(resp.error.unwrap().contains("bad request"));
    }
}
