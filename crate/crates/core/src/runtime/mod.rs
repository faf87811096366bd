//! Deterministic discrete-event simulation of the asynchronous agent loop.
//!
//! Every agent cycles through a compute phase of length `T_c` (the plan
//! being computed takes effect at its end) and a wait phase of length `T_w`.
//! After committing a plan an agent broadcasts it; a neighbor that is waiting
//! when the message arrives completes a renewal of the pair's allocation.

pub mod trace;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::allocation::{make_renewal_sampled, Allocation, AllocationError, Renewal};
use crate::config::{AgentConfig, AgentId};
use crate::dynamics::{AgentState, ControlInput};
use crate::geometry::{Polygon, Vec2};
use crate::harness::scenario::Scenario;
use crate::planner::{
    build_problem, constraint_shortfalls, deadlock_adjust, solve, PlanStatus, PlannerError, PlanningProblem,
    SolveOutcome,
};
use crate::trajectory::{constant_trajectory, Trajectory};
use trace::*;

/// Arrival tolerance on position (m).
pub const D_ARR: f64 = 0.05;
/// Arrival tolerance on speed (m/s).
pub const V_ARR: f64 = 0.02;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// Finish time of the replanning after one finishing at `last_finish`.
pub fn next_finish_time(cfg: &AgentConfig, last_finish: f64) -> f64 {
    last_finish + cfg.t_w + cfg.t_c
}

/// Upper bound on the time between two consecutive renewals of a pair.
pub fn frequency_bound(a: &AgentConfig, b: &AgentConfig) -> f64 {
    a.t_c.min(b.t_c) + a.period().max(b.period())
}

/// Start time of replanning `n` (zero based).
fn start_time(cfg: &AgentConfig, n: usize) -> f64 {
    cfg.first_start() + cfg.period() * n as f64
}

fn finish_time(cfg: &AgentConfig, n: usize) -> f64 {
    start_time(cfg, n) + cfg.t_c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Before the first replanning; counts as waiting for handshakes.
    Idle,
    Computing,
    Waiting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Finish(AgentId),
    Deliver { from: AgentId, to: AgentId, commit: usize },
    Start(AgentId),
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::Finish(_) => 0,
            EventKind::Deliver { .. } => 1,
            EventKind::Start(_) => 3,
        }
    }

    fn ids(&self) -> (AgentId, AgentId) {
        match *self {
            EventKind::Finish(a) | EventKind::Start(a) => (a, a),
            EventKind::Deliver { from, to, .. } => (from, to),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    seq: u64,
}

impl Event {
    fn key(&self) -> (u8, AgentId, AgentId, u64) {
        let (a, b) = self.kind.ids();
        (self.kind.rank(), a, b, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.key().cmp(&self.key()))
    }
}

#[derive(Debug, Clone)]
pub struct PairSession {
    pub pair: (AgentId, AgentId),
    pub established_at: f64,
    /// Number of committed renewals, the establishing one included.
    pub m: u32,
    pub last_commit: f64,
    /// Allocation of the lower id, then of the higher id.
    pub allocations: (Allocation, Allocation),
    pub intervals: Vec<f64>,
}

impl PairSession {
    fn allocation_for(&self, id: AgentId) -> &Allocation {
        if id == self.pair.0 {
            &self.allocations.0
        } else {
            &self.allocations.1
        }
    }

    fn apply(&mut self, renewal: Renewal, now: f64) -> Result<(), AllocationError> {
        let lo = self.allocations.0.updated(renewal.clone())?;
        let hi = self.allocations.1.updated(renewal.mirror())?;
        self.allocations = (lo, hi);
        self.m += 1;
        self.intervals.push(now - self.last_commit);
        self.last_commit = now;
        Ok(())
    }
}

struct Pending {
    problem: Option<PlanningProblem>,
    result: Option<(Result<SolveOutcome, PlannerError>, f64)>,
}

struct AgentRt {
    cfg: AgentConfig,
    phase: Phase,
    /// Replannings started so far.
    started: usize,
    /// Index of the last commit; 0 is the initial rest trajectory.
    commit_index: usize,
    committed: Trajectory,
    /// Commits that changed the trajectory, in time order.
    history: Vec<Trajectory>,
    last_inputs: Option<(f64, Vec<ControlInput>)>,
    pending: Option<Pending>,
    constraint_polygon: Polygon,
    /// The deadlock perturbation stays on until this time.
    stuck_until: f64,
}

impl AgentRt {
    fn executed(&self, t: f64) -> AgentState {
        let idx = self.history.partition_point(|tr| tr.start_time <= t).saturating_sub(1);
        self.history[idx].sample_clamped(t)
    }

    fn next_finish(&self) -> f64 {
        match self.phase {
            Phase::Idle => finish_time(&self.cfg, 0),
            Phase::Computing => finish_time(&self.cfg, self.started - 1),
            Phase::Waiting => finish_time(&self.cfg, self.started),
        }
    }

    /// Constraint polygon placed at the committed position; it covers the
    /// footprint over half a sampling step either way.
    fn swept_shape(&self, t: f64) -> Polygon {
        let p = self.committed.sample_clamped(t).position();
        let body = &self.constraint_polygon;
        Polygon::new(body.vertices().iter().map(|&v| v + p).collect()).expect("translation keeps convexity")
    }

    fn accepts_feedback(&self) -> bool {
        matches!(self.phase, Phase::Idle | Phase::Waiting)
    }

    fn arrived(&self, t: f64) -> bool {
        let s = self.executed(t);
        s.position().dist(self.cfg.target.position()) <= D_ARR && self.cfg.model.speed(&s) < V_ARR
    }
}

/// Outcome of [`run`]: the trace plus how the run ended.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: TraceLog,
    pub reason: EndReason,
    pub end_time: f64,
    pub sessions: Vec<PairSession>,
}

pub struct Simulator {
    scenario: Scenario,
    agents: BTreeMap<AgentId, AgentRt>,
    sessions: BTreeMap<(AgentId, AgentId), PairSession>,
    queue: BinaryHeap<Event>,
    seq: u64,
    rng: ChaCha8Rng,
    trace: TraceLog,
    t_max: f64,
}

fn key(a: AgentId, b: AgentId) -> (AgentId, AgentId) {
    (a.min(b), a.max(b))
}

impl Simulator {
    pub fn new(scenario: &Scenario, seed: u64, t_max: f64) -> Result<Self, RuntimeError> {
        scenario.validate().map_err(|e| RuntimeError::InvalidScenario(e.to_string()))?;
        let mut trace = TraceLog::default();
        let mut settings = scenario.settings;
        settings.seed = seed;
        settings.t_max = t_max;
        trace.push(TraceRecord::new(0.0, "-", KIND_SETTINGS, &settings));
        let mut agents = BTreeMap::new();
        for cfg in &scenario.agents {
            let initial = constant_trajectory(&cfg.model, cfg.initial, 0.0, cfg.h)
                .map_err(|e| RuntimeError::InvalidScenario(format!("agent {}: {e}", cfg.id)))?;
            trace.push(TraceRecord::new(0.0, cfg.id.to_string(), KIND_AGENT, cfg));
            agents.insert(
                cfg.id,
                AgentRt {
                    cfg: cfg.clone(),
                    phase: Phase::Idle,
                    started: 0,
                    commit_index: 0,
                    committed: initial.clone(),
                    history: vec![initial],
                    last_inputs: None,
                    pending: None,
                    stuck_until: f64::NEG_INFINITY,
                    constraint_polygon: cfg.constraint_polygon(),
                },
            );
        }
        for a in agents.values() {
            trace.push(TraceRecord::new(0.0, a.cfg.id.to_string(), KIND_COMMIT, &CommitRecord {
                index: 0,
                time: 0.0,
                status: PlanStatus::Initial,
                fallback: false,
                trajectory: a.committed.clone(),
                objective: None,
                qp_iterations: 0,
                sqp_iterations: 0,
                runtime_ms: None,
            }));
        }
        let mut sim = Self {
            scenario: Scenario { settings, agents: scenario.agents.clone() },
            agents,
            sessions: BTreeMap::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace,
            t_max,
        };
        let starts: Vec<(AgentId, f64)> = sim.agents.values().map(|a| (a.cfg.id, start_time(&a.cfg, 0))).collect();
        for (id, t) in starts {
            sim.schedule(t, EventKind::Start(id));
        }
        Ok(sim)
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        if time <= self.t_max {
            self.seq += 1;
            self.queue.push(Event { time, kind, seq: self.seq });
        }
    }

    fn protocol(&mut self, i: AgentId, j: AgentId, time: f64, message: String) {
        log::warn!("pair {}: {message}", pair_subject(i, j));
        let (i, j) = key(i, j);
        self.trace.push(TraceRecord::new(time, pair_subject(i, j), KIND_PROTOCOL, &ProtocolRecord { i, j, time, message }));
    }

    fn log_renewal(&mut self, s: &PairSession, renewal: &Renewal, now: f64) {
        let (i, j) = s.pair;
        self.trace.push(TraceRecord::new(now, pair_subject(i, j), KIND_RENEWAL, &RenewalRecord {
            i,
            j,
            m: s.m,
            commit_time: now,
            t_start: renewal.t_start,
            t_settle: renewal.t_settle,
            stamps: renewal.stamps.clone(),
        }));
    }

    fn renewal_between(&self, a: AgentId, b: AgentId, t_start: f64) -> Result<Renewal, AllocationError> {
        let (lo, hi) = key(a, b);
        let (ra, rb) = (&self.agents[&lo], &self.agents[&hi]);
        let t_settle = ra.committed.end_time().max(rb.committed.end_time()).max(t_start);
        make_renewal_sampled(
            |t| ra.swept_shape(t),
            |t| rb.swept_shape(t),
            t_start,
            t_settle,
            ra.cfg.h.min(rb.cfg.h),
            true,
        )
    }

    /// Opens a session between two agents that just came within range;
    /// the first renewal starts immediately.
    pub fn establish_session(&mut self, a: AgentId, b: AgentId, now: f64) -> bool {
        let pair = key(a, b);
        if self.sessions.contains_key(&pair) {
            return false;
        }
        match self.renewal_between(a, b, now) {
            Ok(renewal) => {
                let mut session = PairSession {
                    pair,
                    established_at: now,
                    m: 0,
                    last_commit: now,
                    allocations: (Allocation::empty(), Allocation::empty()),
                    intervals: Vec::new(),
                };
                if let Err(e) = session.apply(renewal.clone(), now) {
                    self.protocol(a, b, now, format!("session renewal rejected: {e}"));
                    return false;
                }
                session.intervals.clear();
                self.trace.push(TraceRecord::new(now, pair_subject(a, b), KIND_SESSION, &SessionRecord {
                    i: pair.0,
                    j: pair.1,
                    established_at: now,
                }));
                self.log_renewal(&session, &renewal, now);
                self.sessions.insert(pair, session);
                true
            }
            Err(e) => {
                self.protocol(a, b, now, format!("cannot establish session: {e}"));
                false
            }
        }
    }

    /// Handshake after `finisher` committed at `now`; succeeds only when the
    /// other agent is waiting (or has not started yet).
    pub fn try_renewal(&mut self, finisher: AgentId, other: AgentId, now: f64) -> Option<u32> {
        let pair = key(finisher, other);
        let session = self.sessions.get(&pair)?;
        if !self.agents[&other].accepts_feedback() || session.last_commit == now {
            return None;
        }
        let t_start = self.agents[&finisher].next_finish().max(self.agents[&other].next_finish());
        let renewal = match self.renewal_between(finisher, other, t_start) {
            Ok(r) => r,
            Err(e) => {
                self.protocol(finisher, other, now, format!("renewal aborted: {e}"));
                return None;
            }
        };
        let mut session = self.sessions.remove(&pair).expect("checked above");
        let out = match session.apply(renewal.clone(), now) {
            Ok(()) => {
                self.log_renewal(&session, &renewal, now);
                Some(session.m)
            }
            Err(e) => {
                self.protocol(finisher, other, now, format!("renewal rejected: {e}"));
                None
            }
        };
        self.sessions.insert(pair, session);
        out
    }

    fn neighbors(&self, id: AgentId) -> Vec<AgentId> {
        self.sessions
            .keys()
            .filter_map(|&(a, b)| if a == id { Some(b) } else if b == id { Some(a) } else { None })
            .collect()
    }

    fn allocations_of(&self, id: AgentId) -> Vec<(AgentId, &Allocation)> {
        self.neighbors(id)
            .into_iter()
            .map(|n| (n, self.sessions[&key(id, n)].allocation_for(id)))
            .collect()
    }

    fn on_start(&mut self, id: AgentId, now: f64) {
        let others: Vec<AgentId> = self.agents.keys().copied().filter(|&o| o != id).collect();
        let here = self.agents[&id].executed(now).position();
        for o in others {
            let other = &self.agents[&o];
            let range = self.agents[&id].cfg.comm_radius.min(other.cfg.comm_radius);
            if !self.sessions.contains_key(&key(id, o)) && other.executed(now).position().dist(here) <= range {
                self.establish_session(id, o, now);
            }
        }

        let agent = &self.agents[&id];
        let cfg = &agent.cfg;
        let t_n = now + cfg.t_c;
        let x0 = agent.committed.sample_clamped(t_n);

        let params = self.scenario.settings.deadlock;
        let mean_speed = if now < agent.stuck_until {
            0.0
        } else if now - params.window >= cfg.first_start() {
            agent.executed(now).position().dist(agent.executed(now - params.window).position()) / params.window
        } else {
            f64::INFINITY
        };
        let neighbor_pos: Vec<Vec2> =
            self.neighbors(id).iter().map(|n| self.agents[n].executed(now).position()).collect();
        let target = deadlock_adjust(here, mean_speed, cfg.target, &neighbor_pos, &params);
        let perturbed = target != cfg.target;

        let warm = agent.last_inputs.as_ref().map(|(t_prev, u)| {
            let shift = (((t_n - t_prev) / cfg.h) + 0.5).floor().max(0.0) as usize;
            u.iter().skip(shift).copied().collect::<Vec<_>>()
        });
        let problem = build_problem(cfg, x0, t_n, &self.allocations_of(id), target, warm);
        let index = agent.started + 1;
        let (problem, count) = match problem {
            Ok(p) => {
                let n = p.constraints.len();
                (Some(p), n)
            }
            Err(e) => {
                log::warn!("agent {id}: cannot build problem: {e}");
                (None, 0)
            }
        };
        self.trace.push(TraceRecord::new(now, id.to_string(), KIND_START, &StartRecord {
            index,
            time: now,
            target: [target.0[0], target.0[1]],
            constraints: count,
        }));
        let agent = self.agents.get_mut(&id).unwrap();
        if perturbed && now >= agent.stuck_until {
            agent.stuck_until = now + params.hold;
        }
        agent.pending = Some(Pending { problem, result: None });
        agent.phase = Phase::Computing;
        agent.started += 1;
        self.schedule(t_n, EventKind::Finish(id));
    }

    /// Solves every outstanding problem; results do not depend on the order
    /// or on the worker count.
    fn solve_pending(&mut self) {
        let jobs: Vec<(AgentId, PlanningProblem)> = self
            .agents
            .iter()
            .filter_map(|(&id, a)| {
                let p = a.pending.as_ref()?;
                if p.result.is_some() {
                    return None;
                }
                p.problem.clone().map(|pr| (id, pr))
            })
            .collect();
        let run = |(id, p): &(AgentId, PlanningProblem)| {
            let clock = Instant::now();
            let out = solve(p);
            (*id, out, clock.elapsed().as_secs_f64() * 1e3)
        };
        let results: Vec<_> = if self.scenario.settings.parallel {
            jobs.par_iter().map(run).collect()
        } else {
            jobs.iter().map(run).collect()
        };
        for (id, out, ms) in results {
            if let Some(p) = self.agents.get_mut(&id).unwrap().pending.as_mut() {
                p.result = Some((out, ms));
            }
        }
    }

    fn on_finish(&mut self, id: AgentId, now: f64) {
        let needs_solve = self.agents[&id].pending.as_ref().is_some_and(|p| p.problem.is_some() && p.result.is_none());
        if needs_solve {
            self.solve_pending();
        }
        let pending = self.agents.get_mut(&id).unwrap().pending.take();
        let settings = self.scenario.settings;
        let (mut status, mut plan, mut wall_ms, problem) = match pending {
            Some(Pending { problem: Some(problem), result: Some((out, ms)) }) => match out {
                Ok(SolveOutcome::Plan(plan)) => (PlanStatus::Solved, Some(plan), ms, Some(problem)),
                Ok(SolveOutcome::Infeasible(_)) => (PlanStatus::Infeasible, None, ms, Some(problem)),
                Err(e) => {
                    log::warn!("agent {id}: {e}");
                    (PlanStatus::SolverError, None, ms, Some(problem))
                }
            },
            _ => (PlanStatus::SolverError, None, 0.0, None),
        };
        if settings.real_time && wall_ms > self.agents[&id].cfg.t_c * 1e3 {
            status = PlanStatus::Overrun;
            plan = None;
        }
        // Sessions opened while computing are unknown to the plan.
        if let (Some(p), Some(problem)) = (&plan, &problem) {
            let cfg = &self.agents[&id].cfg;
            let current = build_problem(cfg, problem.x0, now, &self.allocations_of(id), problem.target, None);
            let ok = current.map(|c| constraint_shortfalls(&c, &p.trajectory.knots, crate::geometry::EPS_SEP).is_empty());
            if !matches!(ok, Ok(true)) {
                status = PlanStatus::Invalidated;
                plan = None;
            }
        }
        if !settings.record_timing {
            wall_ms = f64::NAN;
        }

        let agent = self.agents.get_mut(&id).unwrap();
        agent.commit_index = agent.started;
        let record = match &plan {
            Some(p) => CommitRecord {
                index: agent.commit_index,
                time: now,
                status,
                fallback: false,
                trajectory: p.trajectory.clone(),
                objective: Some(p.diagnostics.objective),
                qp_iterations: p.diagnostics.qp_iterations,
                sqp_iterations: p.diagnostics.sqp_iterations,
                runtime_ms: wall_ms.is_finite().then_some(wall_ms),
            },
            None => CommitRecord {
                index: agent.commit_index,
                time: now,
                status,
                fallback: true,
                trajectory: agent.committed.clone(),
                objective: None,
                qp_iterations: 0,
                sqp_iterations: 0,
                runtime_ms: wall_ms.is_finite().then_some(wall_ms),
            },
        };
        if let Some(p) = plan {
            agent.committed = p.trajectory.clone();
            agent.history.push(p.trajectory);
            agent.last_inputs = Some((now, p.inputs));
        }
        agent.phase = Phase::Waiting;
        let next_start = start_time(&agent.cfg, agent.started);
        self.trace.push(TraceRecord::new(now, id.to_string(), KIND_COMMIT, &record));
        self.schedule(next_start, EventKind::Start(id));

        let commit = self.agents[&id].commit_index;
        for n in self.neighbors(id) {
            let jitter = if settings.jitter > 0.0 { self.rng.random_range(0.0..settings.jitter) } else { 0.0 };
            self.schedule(now + settings.delay + jitter, EventKind::Deliver { from: id, to: n, commit });
        }
    }

    fn on_deliver(&mut self, from: AgentId, to: AgentId, commit: usize, now: f64) {
        let sender = &self.agents[&from];
        // A payload superseded by a newer replanning is discarded.
        if sender.phase != Phase::Waiting || sender.commit_index != commit {
            return;
        }
        self.try_renewal(from, to, now);
    }

    fn all_arrived(&self, t: f64) -> bool {
        self.agents.values().all(|a| a.arrived(t))
    }

    pub fn run(mut self) -> RunResult {
        let mut end = (EndReason::Timeout, self.t_max);
        while let Some(ev) = self.queue.pop() {
            match ev.kind {
                EventKind::Start(id) => self.on_start(id, ev.time),
                EventKind::Finish(id) => self.on_finish(id, ev.time),
                EventKind::Deliver { from, to, commit } => self.on_deliver(from, to, commit, ev.time),
            }
            if matches!(ev.kind, EventKind::Finish(_)) && self.all_arrived(ev.time) {
                end = (EndReason::Arrived, ev.time);
                break;
            }
        }
        self.trace.push(TraceRecord::new(end.1, "-", KIND_END, &EndRecord { time: end.1, reason: end.0 }));
        RunResult { trace: self.trace, reason: end.0, end_time: end.1, sessions: self.sessions.into_values().collect() }
    }
}

/// Runs a scenario to arrival or `t_max`.
pub fn run(scenario: &Scenario, seed: u64, t_max: f64) -> Result<RunResult, RuntimeError> {
    Ok(Simulator::new(scenario, seed, t_max)?.run())
}
