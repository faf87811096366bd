//! Trace verification: dense collision oracle, renewal-interval bound and
//! conformance of every solved plan with the allocations it was built for.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{Allocation, Renewal};
use crate::config::AgentId;
use crate::geometry::{polygons_intersect, EPS_SEP};
use crate::harness::replay::{sample_times, Replay};
use crate::harness::scenario::Scenario;
use crate::planner::{build_problem, constraint_shortfalls, PlanStatus};
use crate::runtime::frequency_bound;
use crate::runtime::trace::{CommitRecord, ProtocolRecord, RenewalRecord, TraceError, TraceLog, KIND_COMMIT, KIND_RENEWAL};

/// Slack for the event queue's tie-breaking in interval checks.
pub const TIE_BREAK_TICK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionFinding {
    pub a: AgentId,
    pub b: AgentId,
    /// First sampled time of contact.
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConformanceKind {
    /// A knot (or terminal) constraint holds with less than the margin.
    Knot,
    /// The footprint leaves the allocated half space between stamps.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceFinding {
    pub agent: AgentId,
    /// Replanning index of the offending plan.
    pub index: usize,
    pub neighbor: AgentId,
    /// Earliest violating time.
    pub stamp: f64,
    pub kind: ConformanceKind,
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalFinding {
    pub a: AgentId,
    pub b: AgentId,
    /// Commit time of the renewal closing the interval.
    pub at: f64,
    pub delta: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub collisions: Vec<CollisionFinding>,
    pub conformance: Vec<ConformanceFinding>,
    pub intervals: Vec<IntervalFinding>,
    pub protocol: Vec<ProtocolRecord>,
    pub pairs_checked: usize,
    pub plans_checked: usize,
    pub intervals_checked: usize,
    /// Intervals opened before both agents had started; not bounded.
    pub startup_intervals: usize,
    pub min_distance: f64,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.collisions.is_empty() && self.conformance.is_empty() && self.intervals.is_empty() && self.protocol.is_empty()
    }
}

fn renewal_of(rec: &RenewalRecord) -> Renewal {
    Renewal { t_start: rec.t_start, t_settle: rec.t_settle, stamps: rec.stamps.clone() }
}

fn check_collisions(replay: &Replay, dt: f64) -> (Vec<CollisionFinding>, f64) {
    let times = sample_times(0.0, replay.end_time(), dt);
    let results: Vec<(Option<CollisionFinding>, f64)> = replay
        .pairs()
        .par_iter()
        .map(|&(a, b)| {
            let reach = replay.agents[&a].footprint.circumradius() + replay.agents[&b].footprint.circumradius();
            let mut min_d = f64::INFINITY;
            let mut hit = None;
            for &t in &times {
                let d = replay.executed(a, t).position().dist(replay.executed(b, t).position());
                min_d = min_d.min(d);
                if hit.is_none() && d <= reach && polygons_intersect(&replay.shape(a, t), &replay.shape(b, t)) {
                    hit = Some(CollisionFinding { a, b, time: t });
                }
            }
            (hit, min_d)
        })
        .collect();
    let min_d = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    (results.into_iter().filter_map(|r| r.0).collect(), min_d)
}

/// Inter-renewal intervals against the pair bound. Intervals opened before
/// the later first start of the pair are counted as startup intervals and
/// not bounded.
fn check_intervals(replay: &Replay, scenario: &Scenario) -> (Vec<IntervalFinding>, usize, usize) {
    let mut out = Vec::new();
    let mut n = 0;
    let mut startup = 0;
    for (&(a, b), list) in &replay.renewals {
        let (Some(ca), Some(cb)) = (scenario.agent(a), scenario.agent(b)) else { continue };
        let bound = frequency_bound(ca, cb);
        let running = ca.first_start().max(cb.first_start());
        for w in list.windows(2) {
            if w[0].commit_time < running {
                startup += 1;
                continue;
            }
            n += 1;
            let delta = w[1].commit_time - w[0].commit_time;
            if !(delta > 0.0) || delta > bound + TIE_BREAK_TICK {
                out.push(IntervalFinding { a, b, at: w[1].commit_time, delta, bound });
            }
        }
    }
    (out, n, startup)
}

/// Checks one solved plan against the allocations in force at its commit.
fn check_plan(
    scenario: &Scenario,
    agent: AgentId,
    commit: &CommitRecord,
    allocs: &[(AgentId, &Allocation)],
    dt: f64,
) -> Option<ConformanceFinding> {
    let cfg = scenario.agent(agent)?;
    let traj = &commit.trajectory;
    let x0 = traj.knots[0];
    let finding = |neighbor, stamp, kind, clearance| ConformanceFinding {
        agent,
        index: commit.index,
        neighbor,
        stamp,
        kind,
        clearance,
    };
    let problem = match build_problem(cfg, x0, commit.time, allocs, cfg.target, None) {
        Ok(p) => p,
        Err(_) => return Some(finding(agent, commit.time, ConformanceKind::Knot, f64::NEG_INFINITY)),
    };
    if traj.knots.len() != problem.steps + 1 {
        return Some(finding(agent, commit.time, ConformanceKind::Knot, f64::NEG_INFINITY));
    }
    let knot_hit = constraint_shortfalls(&problem, &traj.knots, EPS_SEP)
        .into_iter()
        .map(|(ci, cl)| {
            let c = &problem.constraints[ci];
            finding(c.neighbor, traj.knot_time(c.knot), ConformanceKind::Knot, cl)
        })
        .min_by(|x, y| x.stamp.total_cmp(&y.stamp));
    if knot_hit.is_some() {
        return knot_hit;
    }
    let t_e = allocs.iter().filter_map(|(_, a)| a.settle_time()).fold(traj.end_time(), f64::max);
    for t in sample_times(commit.time, t_e, dt) {
        let shape = traj.shape_at(&cfg.footprint, t);
        for &(n, alloc) in allocs {
            if alloc.established_at().is_none_or(|e| t < e) {
                continue;
            }
            let Ok(h) = alloc.query(t) else { continue };
            let cl = h.polygon_clearance(&shape);
            if cl < 0.0 {
                return Some(finding(n, t, ConformanceKind::Dense, cl));
            }
        }
    }
    None
}

fn check_conformance(trace: &TraceLog, scenario: &Scenario, dt: f64) -> Result<(Vec<ConformanceFinding>, usize), TraceError> {
    // Replays renewals in trace order so every plan sees the allocations
    // that were in force when it was committed.
    let mut allocs: BTreeMap<(AgentId, AgentId), (Allocation, Allocation)> = BTreeMap::new();
    let mut jobs = Vec::new();
    for (i, r) in trace.records.iter().enumerate() {
        match r.kind.as_str() {
            KIND_RENEWAL => {
                let rec: RenewalRecord = r.decode(i + 1)?;
                let ren = renewal_of(&rec);
                let e = allocs.entry((rec.i, rec.j)).or_insert_with(|| (Allocation::empty(), Allocation::empty()));
                let bad = |e: crate::allocation::AllocationError| TraceError::Format { line: i + 1, message: e.to_string() };
                e.0.update(ren.clone()).map_err(bad)?;
                e.1.update(ren.mirror()).map_err(bad)?;
            }
            KIND_COMMIT => {
                let rec: CommitRecord = r.decode(i + 1)?;
                if rec.status != PlanStatus::Solved || rec.fallback {
                    continue;
                }
                let agent: AgentId = r.subject.parse().map_err(|_| TraceError::Format {
                    line: i + 1,
                    message: format!("bad agent subject {:?}", r.subject),
                })?;
                let mine: Vec<(AgentId, Allocation)> = allocs
                    .iter()
                    .filter_map(|(&(a, b), (la, lb))| {
                        if a == agent {
                            Some((b, la.clone()))
                        } else if b == agent {
                            Some((a, lb.clone()))
                        } else {
                            None
                        }
                    })
                    .collect();
                jobs.push((agent, rec, mine));
            }
            _ => {}
        }
    }
    let plans = jobs.len();
    let mut findings: Vec<ConformanceFinding> = jobs
        .par_iter()
        .filter_map(|(agent, rec, mine)| {
            let refs: Vec<(AgentId, &Allocation)> = mine.iter().map(|(n, a)| (*n, a)).collect();
            check_plan(scenario, *agent, rec, &refs, dt)
        })
        .collect();
    findings.sort_by(|x, y| (x.agent, x.index).cmp(&(y.agent, y.index)));
    Ok((findings, plans))
}

/// Verifies a complete trace against the scenario it was produced from.
pub fn verify_trace(trace: &TraceLog, scenario: &Scenario) -> Result<VerificationReport, TraceError> {
    verify_trace_at(trace, scenario, scenario.settings.dt_check)
}

/// [`verify_trace`] at an explicit dense-check resolution.
pub fn verify_trace_at(trace: &TraceLog, scenario: &Scenario, dt: f64) -> Result<VerificationReport, TraceError> {
    let replay = Replay::from_trace(trace)?;
    for id in replay.agents.keys() {
        if scenario.agent(*id).is_none() {
            return Err(TraceError::Format { line: 0, message: format!("agent {id} is not part of the scenario") });
        }
    }
    let (mut collisions, min_distance) = check_collisions(&replay, dt);
    collisions.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)));
    let (intervals, intervals_checked, startup_intervals) = check_intervals(&replay, scenario);
    let (conformance, plans_checked) = check_conformance(trace, scenario, dt)?;
    Ok(VerificationReport {
        collisions,
        conformance,
        intervals,
        protocol: replay.protocol.clone(),
        pairs_checked: replay.pairs().len(),
        plans_checked,
        intervals_checked,
        startup_intervals,
        min_distance,
    })
}
