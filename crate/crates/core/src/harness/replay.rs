//! Reconstruction of a run from its trace: configurations, executed paths,
//! committed plans and pairwise renewals.

use std::collections::BTreeMap;

use crate::config::{AgentConfig, AgentId};
use crate::dynamics::AgentState;
use crate::geometry::Polygon;
use crate::harness::scenario::Settings;
use crate::runtime::trace::*;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone)]
pub struct Replay {
    pub settings: Settings,
    pub agents: BTreeMap<AgentId, AgentConfig>,
    /// Every commit record per agent, in trace order.
    pub commits: BTreeMap<AgentId, Vec<CommitRecord>>,
    pub starts: BTreeMap<AgentId, Vec<StartRecord>>,
    pub sessions: Vec<SessionRecord>,
    pub renewals: BTreeMap<(AgentId, AgentId), Vec<RenewalRecord>>,
    pub protocol: Vec<ProtocolRecord>,
    pub end: Option<EndRecord>,
    /// Trajectories that were actually executed, by commit time.
    paths: BTreeMap<AgentId, Vec<Trajectory>>,
}

impl Replay {
    pub fn from_trace(trace: &TraceLog) -> Result<Self, TraceError> {
        let mut settings = None;
        let mut agents = BTreeMap::new();
        let mut commits: BTreeMap<AgentId, Vec<CommitRecord>> = BTreeMap::new();
        let mut starts: BTreeMap<AgentId, Vec<StartRecord>> = BTreeMap::new();
        let mut sessions = Vec::new();
        let mut renewals: BTreeMap<(AgentId, AgentId), Vec<RenewalRecord>> = BTreeMap::new();
        let mut protocol = Vec::new();
        let mut end = None;
        for (i, r) in trace.records.iter().enumerate() {
            let line = i + 1;
            match r.kind.as_str() {
                KIND_SETTINGS => settings = Some(r.decode::<Settings>(line)?),
                KIND_AGENT => {
                    let cfg: AgentConfig = r.decode(line)?;
                    agents.insert(cfg.id, cfg);
                }
                KIND_START => starts.entry(agent_of(r, line)?).or_default().push(r.decode(line)?),
                KIND_COMMIT => commits.entry(agent_of(r, line)?).or_default().push(r.decode(line)?),
                KIND_SESSION => sessions.push(r.decode(line)?),
                KIND_RENEWAL => {
                    let rec: RenewalRecord = r.decode(line)?;
                    renewals.entry((rec.i, rec.j)).or_default().push(rec);
                }
                KIND_PROTOCOL => protocol.push(r.decode(line)?),
                KIND_END => end = Some(r.decode(line)?),
                other => {
                    return Err(TraceError::Format { line, message: format!("unknown record kind {other:?}") });
                }
            }
        }
        let settings = settings.ok_or(TraceError::Missing("settings"))?;
        let mut paths = BTreeMap::new();
        for (&id, list) in &commits {
            if !agents.contains_key(&id) {
                return Err(TraceError::Missing("agent"));
            }
            let p: Vec<Trajectory> = list.iter().filter(|c| !c.fallback).map(|c| c.trajectory.clone()).collect();
            paths.insert(id, p);
        }
        for &id in agents.keys() {
            if paths.get(&id).is_none_or(|p| p.is_empty()) {
                return Err(TraceError::Missing("initial commit"));
            }
        }
        Ok(Self { settings, agents, commits, starts, sessions, renewals, protocol, end, paths })
    }

    pub fn end_time(&self) -> f64 {
        self.end.as_ref().map_or_else(
            || {
                self.commits.values().flatten().map(|c| c.time).fold(0.0, f64::max)
            },
            |e| e.time,
        )
    }

    pub fn executed(&self, id: AgentId, t: f64) -> AgentState {
        let p = &self.paths[&id];
        let idx = p.partition_point(|tr| tr.start_time <= t).saturating_sub(1);
        p[idx].sample_clamped(t)
    }

    pub fn shape(&self, id: AgentId, t: f64) -> Polygon {
        let p = &self.paths[&id];
        let idx = p.partition_point(|tr| tr.start_time <= t).saturating_sub(1);
        p[idx].shape_at(&self.agents[&id].footprint, t)
    }

    pub fn pairs(&self) -> Vec<(AgentId, AgentId)> {
        let ids: Vec<AgentId> = self.agents.keys().copied().collect();
        let mut out = Vec::new();
        for (k, &a) in ids.iter().enumerate() {
            for &b in &ids[k + 1..] {
                out.push((a, b));
            }
        }
        out
    }
}

fn agent_of(r: &TraceRecord, line: usize) -> Result<AgentId, TraceError> {
    r.subject.parse().map_err(|_| TraceError::Format { line, message: format!("bad agent subject {:?}", r.subject) })
}

/// Dense check grid `0, dt, 2 dt, ...` up to and including `end`.
pub fn sample_times(start: f64, end: f64, dt: f64) -> Vec<f64> {
    if !(end >= start) {
        return Vec::new();
    }
    let n = ((end - start) / dt + 1e-9).floor() as usize;
    let mut ts: Vec<f64> = (0..=n).map(|k| start + dt * k as f64).collect();
    if end - ts[n] > 1e-12 {
        ts.push(end);
    }
    ts
}
