//! Run metrics computed from a trace alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::AgentId;
use crate::harness::replay::{sample_times, Replay};
use crate::planner::PlanStatus;
use crate::runtime::trace::{TraceError, TraceLog};
use crate::runtime::{D_ARR, V_ARR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub id: AgentId,
    /// Moving time from the first replanning start to arrival (s).
    pub moving_time: f64,
    pub timed_out: bool,
    /// Length of the executed path (m).
    pub length: f64,
    pub straight_line: f64,
    pub replans: usize,
    pub fallbacks: usize,
    /// Maximum and mean wall-clock solve time (ms), when recorded.
    pub max_runtime_ms: Option<f64>,
    pub avg_runtime_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub a: AgentId,
    pub b: AgentId,
    pub renewals: usize,
    pub min_interval: Option<f64>,
    pub max_interval: Option<f64>,
    pub mean_interval: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub agents: Vec<AgentMetrics>,
    pub pairs: Vec<PairMetrics>,
    /// Smallest center-to-center distance over all pairs and samples (m).
    pub min_distance: f64,
    /// Latest arrival over all agents (s).
    pub completion_time: f64,
    pub max_length: f64,
    pub all_arrived: bool,
}

/// Smallest pairwise center distance at each dense sample time.
pub fn distance_series(replay: &Replay, dt: f64) -> Vec<(f64, f64)> {
    let pairs = replay.pairs();
    sample_times(0.0, replay.end_time(), dt)
        .into_iter()
        .map(|t| {
            let d = pairs
                .iter()
                .map(|&(a, b)| replay.executed(a, t).position().dist(replay.executed(b, t).position()))
                .fold(f64::INFINITY, f64::min);
            (t, d)
        })
        .collect()
}

pub fn compute_metrics(trace: &TraceLog) -> Result<Metrics, TraceError> {
    let replay = Replay::from_trace(trace)?;
    let dt = replay.settings.dt_check;
    let end = replay.end_time();
    let times = sample_times(0.0, end, dt);
    let mut agents = Vec::new();
    for (&id, cfg) in &replay.agents {
        let path: Vec<_> = times.iter().map(|&t| replay.executed(id, t)).collect();
        let length = path.windows(2).map(|w| w[0].position().dist(w[1].position())).sum();
        let arrived = |s: &crate::dynamics::AgentState| {
            s.position().dist(cfg.target.position()) <= D_ARR && cfg.model.speed(s) < V_ARR
        };
        // Arrival: first sample after which the agent stays arrived.
        let last_away = path.iter().rposition(|s| !arrived(s));
        let arrival = match last_away {
            None => Some(0.0),
            Some(k) if k + 1 < times.len() => Some(times[k + 1]),
            Some(_) => None,
        };
        let first_start = replay.starts.get(&id).and_then(|s| s.first()).map_or(cfg.first_start(), |s| s.time);
        let (moving_time, timed_out) = match arrival {
            Some(t) => ((t - first_start).max(0.0), false),
            None => (replay.settings.t_max, true),
        };
        let commits = replay.commits.get(&id).map(Vec::as_slice).unwrap_or_default();
        let replans: Vec<_> = commits.iter().filter(|c| c.status != PlanStatus::Initial).collect();
        let runtimes: Vec<f64> = replans.iter().filter_map(|c| c.runtime_ms).collect();
        agents.push(AgentMetrics {
            id,
            moving_time,
            timed_out,
            length,
            straight_line: cfg.initial.position().dist(cfg.target.position()),
            replans: replans.len(),
            fallbacks: replans.iter().filter(|c| c.fallback).count(),
            max_runtime_ms: runtimes.iter().copied().reduce(f64::max),
            avg_runtime_ms: (!runtimes.is_empty()).then(|| runtimes.iter().sum::<f64>() / runtimes.len() as f64),
        });
    }
    let mut pairs = Vec::new();
    let mut by_pair: BTreeMap<(AgentId, AgentId), Vec<f64>> = BTreeMap::new();
    for (&k, list) in &replay.renewals {
        by_pair.insert(k, list.windows(2).map(|w| w[1].commit_time - w[0].commit_time).collect());
    }
    for ((a, b), iv) in by_pair {
        pairs.push(PairMetrics {
            a,
            b,
            renewals: replay.renewals[&(a, b)].len(),
            min_interval: iv.iter().copied().reduce(f64::min),
            max_interval: iv.iter().copied().reduce(f64::max),
            mean_interval: (!iv.is_empty()).then(|| iv.iter().sum::<f64>() / iv.len() as f64),
        });
    }
    let min_distance = distance_series(&replay, dt).iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let all_arrived = agents.iter().all(|a| !a.timed_out);
    let completion_time = agents
        .iter()
        .map(|a| {
            let start = replay.agents[&a.id].first_start();
            if a.timed_out { replay.settings.t_max } else { a.moving_time + start }
        })
        .fold(0.0, f64::max);
    let max_length = agents.iter().map(|a| a.length).fold(0.0, f64::max);
    Ok(Metrics { agents, pairs, min_distance, completion_time, max_length, all_arrived })
}
