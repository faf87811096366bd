//! Line-oriented trace log: `t | subject | kind | json-payload`.
//!
//! The leading time is rounded for readability; every payload carries the
//! exact values needed to replay the run.

use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::allocation::Stamp;
use crate::config::AgentId;
use crate::planner::PlanStatus;
use crate::trajectory::Trajectory;

pub const KIND_SETTINGS: &str = "settings";
pub const KIND_AGENT: &str = "agent";
pub const KIND_START: &str = "start";
pub const KIND_COMMIT: &str = "commit";
pub const KIND_SESSION: &str = "session";
pub const KIND_RENEWAL: &str = "renewal";
pub const KIND_PROTOCOL: &str = "protocol";
pub const KIND_END: &str = "end";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: bad {kind} payload: {source}")]
    Payload { line: usize, kind: String, source: serde_json::Error },
    #[error("trace is missing its {0} record")]
    Missing(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub subject: String,
    pub kind: String,
    pub payload: Value,
}

impl TraceRecord {
    pub fn new<P: Serialize>(t: f64, subject: impl Into<String>, kind: &str, payload: &P) -> Self {
        Self {
            t,
            subject: subject.into(),
            kind: kind.to_string(),
            payload: serde_json::to_value(payload).expect("trace payloads serialize"),
        }
    }

    pub fn decode<P: DeserializeOwned>(&self, line: usize) -> Result<P, TraceError> {
        P::deserialize(&self.payload).map_err(|source| TraceError::Payload { line, kind: self.kind.clone(), source })
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} | {} | {} | {}", self.t, self.subject, self.kind, self.payload)
    }
}

impl FromStr for TraceRecord {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(4, " | ");
        let (Some(t), Some(subject), Some(kind), Some(payload)) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err("expected `t | subject | kind | payload`".into());
        };
        let t = t.trim().parse::<f64>().map_err(|e| format!("bad time {t:?}: {e}"))?;
        let payload = serde_json::from_str(payload).map_err(|e| format!("bad json payload: {e}"))?;
        Ok(Self { t, subject: subject.trim().to_string(), kind: kind.trim().to_string(), payload })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceLog {
    pub records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r = line.parse().map_err(|message| TraceError::Format { line: i + 1, message })?;
            records.push(r);
        }
        Ok(Self { records })
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = (usize, &'a TraceRecord)> + 'a {
        self.records.iter().enumerate().filter(move |(_, r)| r.kind == kind).map(|(i, r)| (i + 1, r))
    }
}

pub fn pair_subject(i: AgentId, j: AgentId) -> String {
    format!("{}-{}", i.min(j), i.max(j))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub index: usize,
    pub time: f64,
    /// Tracking target handed to the planner (differs from the configured
    /// target while a deadlock perturbation is active).
    pub target: [f64; 2],
    pub constraints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub index: usize,
    pub time: f64,
    pub status: PlanStatus,
    /// True when the previous trajectory was kept.
    pub fallback: bool,
    pub trajectory: Trajectory,
    pub objective: Option<f64>,
    pub qp_iterations: usize,
    pub sqp_iterations: usize,
    /// Wall-clock solve time, present only when timing is recorded.
    pub runtime_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub i: AgentId,
    pub j: AgentId,
    pub established_at: f64,
}

/// One committed renewal; `stamps` are agent `i`'s side, `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalRecord {
    pub i: AgentId,
    pub j: AgentId,
    pub m: u32,
    pub commit_time: f64,
    pub t_start: f64,
    pub t_settle: f64,
    pub stamps: Vec<Stamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRecord {
    pub i: AgentId,
    pub j: AgentId,
    pub time: f64,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Arrived,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndRecord {
    pub time: f64,
    pub reason: EndReason,
}
