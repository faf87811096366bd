//! Receding-horizon trajectory planning under pairwise allocations.
//!
//! The discretized optimal control problem tracks the target with a
//! quadratic cost, obeys the dynamics and bounds, comes to rest at the last
//! knot, and keeps the inflated constraint polygon inside every allocated
//! half space in force around each knot. Double integrators are solved as a
//! single convex QP; unicycles and bicycles by SQP on the condensed
//! (input-only) linearization.

pub mod qp;

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix4, Matrix4x2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{Allocation, AllocationError};
use crate::config::{AgentConfig, AgentId};
use crate::dynamics::{integrate, wrap_angle, AgentState, ControlInput, DynamicsModel, ModelKind};
use crate::geometry::{HalfSpace, Polygon, Vec2, EPS_SEP};
use crate::trajectory::Trajectory;
use qp::{QpProblem, QpSettings, QpStatus};

/// Per-knot dynamic-consistency tolerance.
pub const EPS_DC: f64 = 1e-4;
/// Maximum SQP major iterations.
pub const SQP_MAX_ITERATIONS: usize = 8;
/// Extra half-space margin inside SQP subproblems absorbing linearization
/// error of the nonlinear rollout.
const SQP_LINEARIZATION_MARGIN: f64 = 2e-3;
/// Speed and position tolerance for the terminal rest condition.
const TERMINAL_REST_TOL: f64 = 1e-6;

/// Floor on the speed at which unicycle and bicycle sensitivities are taken.
const LINEARIZATION_SPEED: f64 = 0.1;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("allocation query failed: {0}")]
    Allocation(#[from] AllocationError),
    #[error("solver numerical failure: {0}")]
    Solver(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Half space queried at the knot time itself.
    Knot,
    /// A different half space in force within half a step of the knot.
    InterSample,
    /// Allocation stamps past the horizon, imposed on the terminal shape.
    TerminalExtension,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanConstraint {
    pub neighbor: AgentId,
    pub knot: usize,
    pub kind: ConstraintKind,
    pub stamp_time: f64,
    pub half_space: HalfSpace,
}

#[derive(Debug, Clone)]
pub struct PlanningProblem {
    pub cfg: AgentConfig,
    pub x0: AgentState,
    pub t_n: f64,
    /// Tracking target for this replanning (possibly perturbed).
    pub target: AgentState,
    pub steps: usize,
    /// Body-frame polygon checked against half spaces at knots.
    pub constraint_polygon: Polygon,
    pub constraints: Vec<PlanConstraint>,
    pub warm_start: Option<Vec<ControlInput>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    /// Rest trajectory an agent starts with.
    Initial,
    Solved,
    Infeasible,
    SolverError,
    /// Solve exceeded the calculation time in real-time mode.
    Overrun,
    /// Solved plan broke a session established while it was computed.
    Invalidated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub status: PlanStatus,
    pub qp_iterations: usize,
    pub sqp_iterations: usize,
    pub objective: f64,
    /// Wall-clock solve time; not part of deterministic output.
    #[serde(skip)]
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub trajectory: Trajectory,
    pub inputs: Vec<ControlInput>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub enum SolveOutcome {
    Plan(Plan),
    Infeasible(Diagnostics),
}

/// Assembles the problem for one replanning finishing at `t_n`.
pub fn build_problem(
    cfg: &AgentConfig,
    x0: AgentState,
    t_n: f64,
    allocations: &[(AgentId, &Allocation)],
    target: AgentState,
    warm_start: Option<Vec<ControlInput>>,
) -> Result<PlanningProblem, PlannerError> {
    let steps = cfg.horizon_steps();
    let h = cfg.h;
    let mut constraints = Vec::new();
    for &(neighbor, alloc) in allocations {
        let Some(established) = alloc.established_at() else { continue };
        let first = constraints.len();
        let push = |constraints: &mut Vec<PlanConstraint>, knot, kind, stamp_time, half_space: HalfSpace| {
            let dup = constraints[first..].iter().any(|c: &PlanConstraint| c.knot == knot && c.half_space == half_space);
            if !dup {
                constraints.push(PlanConstraint { neighbor, knot, kind, stamp_time, half_space });
            }
        };
        for k in 1..=steps {
            let tk = t_n + h * k as f64;
            if tk < established {
                continue;
            }
            push(&mut constraints, k, ConstraintKind::Knot, tk, alloc.query(tk)?);
            let w0 = if k == 1 { t_n } else { tk - h / 2.0 }.max(established);
            let w1 = if k == steps { tk } else { tk + h / 2.0 };
            for st in alloc.pieces(w0, w1)? {
                if k < steps && st.time >= w1 {
                    continue;
                }
                push(&mut constraints, k, ConstraintKind::InterSample, st.time, st.half_space);
            }
        }
        let t_end = t_n + h * steps as f64;
        if t_end >= established {
            for st in alloc.pieces(t_end, f64::INFINITY)?.into_iter().skip(1) {
                push(&mut constraints, steps, ConstraintKind::TerminalExtension, st.time, st.half_space);
            }
        }
    }
    let mut problem = PlanningProblem {
        cfg: cfg.clone(),
        x0,
        t_n,
        target,
        steps,
        constraint_polygon: cfg.constraint_polygon(),
        constraints,
        warm_start,
    };
    problem.aim_heading();
    Ok(problem)
}

impl PlanningProblem {
    /// Smallest admissible clearance of the constraint polygon at `position`.
    pub fn clearance(&self, c: &PlanConstraint, position: Vec2) -> f64 {
        let n = c.half_space.normal;
        let deepest = self.constraint_polygon.vertices()[self.constraint_polygon.support_index(-n)];
        n.dot(position + deepest) - c.half_space.offset
    }

    pub fn count(&self, kind: ConstraintKind) -> usize {
        self.constraints.iter().filter(|c| c.kind == kind).count()
    }
}

/// Previous plan kept unchanged when a replanning fails.
pub fn fallback(previous: &Trajectory, _now: f64) -> Trajectory {
    previous.clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeadlockParams {
    /// Averaging window for the mean speed (s).
    pub window: f64,
    /// Mean speed under which the agent counts as stuck (m/s).
    pub min_speed: f64,
    /// Closer than this to the target means arrival, not deadlock (m).
    pub arrival_guard: f64,
    /// Clockwise rotation applied to the target about the agent (rad).
    pub angle: f64,
    /// Only neighbors this close can cause a deadlock (m).
    pub neighbor_radius: f64,
    /// Once triggered, the agent keeps counting as stuck for this long (s).
    pub hold: f64,
}

impl Default for DeadlockParams {
    fn default() -> Self {
        Self { window: 0.3, min_speed: 0.2, arrival_guard: 0.3, angle: 1.3, neighbor_radius: 1.6, hold: 0.5 }
    }
}

/// Distance below which agents with a heading stop steering toward the
/// target and hold their current heading.
pub const HOLD_HEADING_DISTANCE: f64 = 0.02;

impl PlanningProblem {
    /// Point closest to the tracking target among the positions that satisfy
    /// every constraint of the problem, or `None` when they admit no common
    /// position.
    pub fn reachable_goal(&self) -> Option<Vec2> {
        let target = self.target.position();
        if self.constraints.is_empty() {
            return Some(target);
        }
        let m = self.constraints.len();
        let mut g = DMatrix::zeros(m, 2);
        let mut gv = DVector::zeros(m);
        for (r, c) in self.constraints.iter().enumerate() {
            let n = c.half_space.normal;
            let deepest = self.constraint_polygon.vertices()[self.constraint_polygon.support_index(-n)];
            g[(r, 0)] = -n.x;
            g[(r, 1)] = -n.y;
            gv[r] = -(c.half_space.offset - n.dot(deepest) + 2.0 * EPS_SEP);
        }
        let qp = QpProblem::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-target.x, -target.y]))
            .with_inequalities(g, gv);
        let sol = qp.solve(&QpSettings::default());
        (sol.status == QpStatus::Solved).then(|| Vec2::new(sol.x[0], sol.x[1]))
    }

    /// Points the heading reference of agents with a heading at the reachable
    /// goal. A bicycle whose goal lies behind it cannot turn on the spot, so
    /// it keeps its current heading, as does any agent already at its goal.
    pub fn aim_heading(&mut self) {
        let kind = self.cfg.model.kind;
        if !kind.has_heading() {
            return;
        }
        let goal = self.reachable_goal().unwrap_or(self.target.position());
        let d = goal - self.x0.position();
        let bearing = d.y.atan2(d.x);
        let behind = wrap_angle(bearing - self.x0.0[2]).abs() > FRAC_PI_2;
        self.target.0[2] = if d.norm() <= HOLD_HEADING_DISTANCE || (kind == ModelKind::Bicycle && behind) {
            self.x0.0[2]
        } else {
            bearing
        };
    }
}

/// Perturbs the tracking target when the agent is stalled near neighbors
/// and still away from its goal.
pub fn deadlock_adjust(
    position: Vec2,
    mean_speed: f64,
    target: AgentState,
    neighbor_positions: &[Vec2],
    params: &DeadlockParams,
) -> AgentState {
    let to_target = target.position() - position;
    let crowded = neighbor_positions.iter().any(|p| p.dist(position) < params.neighbor_radius);
    if mean_speed >= params.min_speed || to_target.norm() <= params.arrival_guard || !crowded {
        return target;
    }
    let p = position + to_target.rotate(-params.angle);
    let mut t = target;
    t.0[0] = p.x;
    t.0[1] = p.y;
    t
}

fn state_jacobians(model: &DynamicsModel, x: &AgentState, u: &ControlInput, h: f64) -> (Matrix4<f64>, Matrix4x2<f64>) {
    if model.kind == ModelKind::DoubleIntegrator {
        #[rustfmt::skip]
        let a = Matrix4::new(
            1.0, 0.0, h, 0.0,
            0.0, 1.0, 0.0, h,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        #[rustfmt::skip]
        let b = Matrix4x2::new(
            0.5 * h * h, 0.0,
            0.0, 0.5 * h * h,
            h, 0.0,
            0.0, h,
        );
        return (a, b);
    }
    // Sensitivities are taken at a speed of at least LINEARIZATION_SPEED.
    let mut x = *x;
    x.0[3] = x.0[3].max(LINEARIZATION_SPEED);
    let x = &x;
    let eps = 1e-6;
    let diff = |p: AgentState, m: AgentState| {
        let mut d = [0.0; 4];
        for i in 0..4 {
            d[i] = p.0[i] - m.0[i];
        }
        d[2] = wrap_angle(d[2]);
        d
    };
    let mut a = Matrix4::zeros();
    for j in 0..4 {
        let (mut xp, mut xm) = (*x, *x);
        xp.0[j] += eps;
        xm.0[j] -= eps;
        let d = diff(integrate(model, &xp, u, h), integrate(model, &xm, u, h));
        for i in 0..4 {
            a[(i, j)] = d[i] / (2.0 * eps);
        }
    }
    let mut b = Matrix4x2::zeros();
    for j in 0..2 {
        let (mut up, mut um) = (*u, *u);
        up.0[j] += eps;
        um.0[j] -= eps;
        let d = diff(integrate(model, x, &up, h), integrate(model, x, &um, h));
        for i in 0..4 {
            b[(i, j)] = d[i] / (2.0 * eps);
        }
    }
    (a, b)
}

pub fn rollout(model: &DynamicsModel, x0: &AgentState, inputs: &[ControlInput], h: f64) -> Vec<AgentState> {
    let mut knots = Vec::with_capacity(inputs.len() + 1);
    knots.push(*x0);
    for u in inputs {
        let next = integrate(model, knots.last().unwrap(), u, h);
        knots.push(next);
    }
    knots
}

fn tracking_error(kind: ModelKind, x: &AgentState, target: &AgentState) -> [f64; 4] {
    let mut e = [0.0; 4];
    for i in 0..4 {
        e[i] = x.0[i] - target.0[i];
    }
    if kind.has_heading() {
        e[2] = wrap_angle(e[2]);
    }
    e
}

/// Tracking cost `h * sum(dx' Q dx + u' P u)` of a knot/input sequence.
pub fn objective(problem: &PlanningProblem, knots: &[AgentState], inputs: &[ControlInput]) -> f64 {
    let cfg = &problem.cfg;
    let q = cfg.weights.q;
    let p = cfg.weights.p;
    let mut j = 0.0;
    for x in &knots[1..] {
        let e = tracking_error(cfg.model.kind, x, &problem.target);
        j += (0..4).map(|i| q[i] * e[i] * e[i]).sum::<f64>();
    }
    for u in inputs {
        j += p[0] * u.0[0] * u.0[0] + p[1] * u.0[1] * u.0[1];
    }
    j * cfg.h
}

fn terminal_rest_components(kind: ModelKind) -> &'static [usize] {
    match kind {
        ModelKind::DoubleIntegrator => &[2, 3],
        _ => &[3],
    }
}

/// Constraint findings for a candidate knot sequence: `(constraint index,
/// clearance)` for every half-space constraint below `margin`.
pub fn constraint_shortfalls(problem: &PlanningProblem, knots: &[AgentState], margin: f64) -> Vec<(usize, f64)> {
    problem
        .constraints
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let cl = problem.clearance(c, knots[c.knot].position());
            (cl < margin).then_some((i, cl))
        })
        .collect()
}

fn admissible(problem: &PlanningProblem, knots: &[AgentState], inputs: &[ControlInput]) -> bool {
    let model = &problem.cfg.model;
    let bounds_ok = knots[1..].iter().all(|x| model.state_violation(x).is_none())
        && inputs.iter().all(|u| model.input_violation(u).is_none());
    let last = knots.last().unwrap();
    let rest_ok = terminal_rest_components(model.kind).iter().all(|&i| last.0[i].abs() <= TERMINAL_REST_TOL);
    bounds_ok && rest_ok && constraint_shortfalls(problem, knots, EPS_SEP).is_empty()
}

struct Subproblem {
    qp: QpProblem,
}

/// Condensed QP in the input increments around a reference rollout.
fn condensed_qp(
    problem: &PlanningProblem,
    x_ref: &[AgentState],
    u_ref: &[ControlInput],
    trust: Option<[f64; 2]>,
    half_space_margin: f64,
    linearization_buffer: f64,
) -> Subproblem {
    let cfg = &problem.cfg;
    let model = &cfg.model;
    let steps = problem.steps;
    let n = 2 * steps;
    let h = cfg.h;

    // sens[k] = d x_k / d u, 4 x n, for k = 0..=steps.
    let mut sens: Vec<DMatrix<f64>> = Vec::with_capacity(steps + 1);
    sens.push(DMatrix::zeros(4, n));
    for k in 0..steps {
        let (a, b) = state_jacobians(model, &x_ref[k], &u_ref[k], h);
        let mut next = DMatrix::zeros(4, n);
        // A * S_k over the already-populated columns.
        let prev = &sens[k];
        for col in 0..2 * k {
            for i in 0..4 {
                let mut acc = 0.0;
                for l in 0..4 {
                    acc += a[(i, l)] * prev[(l, col)];
                }
                next[(i, col)] = acc;
            }
        }
        for i in 0..4 {
            next[(i, 2 * k)] = b[(i, 0)];
            next[(i, 2 * k + 1)] = b[(i, 1)];
        }
        sens.push(next);
    }

    let q = cfg.weights.q;
    let p = cfg.weights.p;
    let mut hm = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    for k in 1..=steps {
        let s = &sens[k];
        let e = tracking_error(model.kind, &x_ref[k], &problem.target);
        let cols = 2 * k;
        for a in 0..cols {
            for i in 0..4 {
                let w = q[i] * s[(i, a)];
                if w == 0.0 {
                    continue;
                }
                c[a] += w * e[i];
                for b in 0..cols {
                    hm[(a, b)] += w * s[(i, b)];
                }
            }
        }
    }
    for j in 0..steps {
        for m in 0..2 {
            hm[(2 * j + m, 2 * j + m)] += p[m];
            c[2 * j + m] += p[m] * u_ref[j].0[m];
        }
    }
    hm *= 2.0 * h;
    c *= 2.0 * h;

    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let (lb, ub) = model.input_bounds();
    for j in 0..steps {
        for m in 0..2 {
            let mut lo = lb[m] - u_ref[j].0[m];
            let mut hi = ub[m] - u_ref[j].0[m];
            if let Some(tr) = trust {
                lo = lo.max(-tr[m]);
                hi = hi.min(tr[m]);
            }
            rows.push((vec![(2 * j + m, 1.0)], hi));
            rows.push((vec![(2 * j + m, -1.0)], -lo));
        }
    }
    let dense_row = |coeffs: &[f64]| -> Vec<(usize, f64)> {
        coeffs.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, &v)| (i, v)).collect()
    };
    let rest = terminal_rest_components(model.kind);
    for k in 1..=steps {
        let s = &sens[k];
        for (i, lo, hi) in model.state_bounds() {
            // Covered by the terminal rest equality.
            if k == steps && rest.contains(&i) {
                continue;
            }
            let row: Vec<f64> = (0..n).map(|a| s[(i, a)]).collect();
            let neg: Vec<f64> = row.iter().map(|v| -v).collect();
            rows.push((dense_row(&row), hi - x_ref[k].0[i]));
            rows.push((dense_row(&neg), x_ref[k].0[i] - lo));
        }
    }
    let reach_speed = model.max_speed();
    let p0 = problem.x0.position();
    for con in &problem.constraints {
        let k = con.knot;
        // Skip constraints no admissible motion can reach.
        let slack0 = problem.clearance(con, p0) - half_space_margin;
        if slack0 > reach_speed * h * k as f64 + 1e-6 {
            continue;
        }
        let nrm = con.half_space.normal;
        let s = &sens[k];
        let row: Vec<f64> = (0..n).map(|a| -(nrm.x * s[(0, a)] + nrm.y * s[(1, a)])).collect();
        let cl_ref = problem.clearance(con, x_ref[k].position());
        // Buffer capped at the reference clearance.
        let buffer = linearization_buffer.min((cl_ref - half_space_margin).max(0.0));
        let rhs = cl_ref - half_space_margin - buffer;
        rows.push((dense_row(&row), rhs));
    }

    let mut g = DMatrix::zeros(rows.len(), n);
    let mut gv = DVector::zeros(rows.len());
    for (r, (coeffs, rhs)) in rows.iter().enumerate() {
        for &(col, v) in coeffs {
            g[(r, col)] = v;
        }
        gv[r] = *rhs;
    }

    let mut e = DMatrix::zeros(rest.len(), n);
    let mut d = DVector::zeros(rest.len());
    for (r, &i) in rest.iter().enumerate() {
        for a in 0..n {
            e[(r, a)] = sens[steps][(i, a)];
        }
        d[r] = -x_ref[steps].0[i];
    }

    Subproblem { qp: QpProblem::new(hm, c).with_equalities(e, d).with_inequalities(g, gv) }
}

fn initial_inputs(problem: &PlanningProblem) -> Vec<ControlInput> {
    let (lb, ub) = problem.cfg.model.input_bounds();
    let mut u = problem.warm_start.clone().unwrap_or_default();
    u.resize(problem.steps, ControlInput::default());
    for ui in &mut u {
        for m in 0..2 {
            ui.0[m] = ui.0[m].clamp(lb[m], ub[m]);
        }
    }
    u
}

pub fn solve(problem: &PlanningProblem) -> Result<SolveOutcome, PlannerError> {
    let clock = Instant::now();
    let cfg = &problem.cfg;
    let model = &cfg.model;
    let h = cfg.h;
    let linear = model.kind == ModelKind::DoubleIntegrator;
    let settings = QpSettings::default();

    let mut u_ref = if linear { vec![ControlInput::default(); problem.steps] } else { initial_inputs(problem) };
    let mut x_ref = rollout(model, &problem.x0, &u_ref, h);
    let (max_iter, mut trust, buffer) = if linear {
        (1, None, 0.0)
    } else {
        let (_, ub) = model.input_bounds();
        (SQP_MAX_ITERATIONS, Some([ub[0], ub[1]]), SQP_LINEARIZATION_MARGIN)
    };

    let mut qp_iterations = 0;
    let mut best: Option<(Vec<AgentState>, Vec<ControlInput>, f64)> = None;
    let mut sqp_iterations = 0;
    for it in 0..max_iter {
        sqp_iterations = it + 1;
        let sub = condensed_qp(problem, &x_ref, &u_ref, trust, 2.0 * EPS_SEP, buffer);
        let sol = sub.qp.solve(&settings);
        qp_iterations += sol.iterations;
        match sol.status {
            QpStatus::Solved => {}
            QpStatus::Infeasible => {
                log::debug!("sqp it {it}: qp infeasible");
                break;
            }
            QpStatus::NumericalFailure => {
                if best.is_some() {
                    break;
                }
                return Err(PlannerError::Solver("singular reduced KKT system".into()));
            }
        }
        let (lb, ub) = model.input_bounds();
        let u_new: Vec<ControlInput> = u_ref
            .iter()
            .enumerate()
            .map(|(j, u)| {
                let mut v = [0.0; 2];
                for m in 0..2 {
                    v[m] = (u.0[m] + sol.x[2 * j + m]).clamp(lb[m], ub[m]);
                }
                ControlInput(v)
            })
            .collect();
        let mut x_new = rollout(model, &problem.x0, &u_new, h);
        if linear {
            // Exact map; remove solver round-off from the rest condition.
            let last = x_new.last_mut().unwrap();
            for &i in terminal_rest_components(model.kind) {
                if last.0[i].abs() <= TERMINAL_REST_TOL {
                    last.0[i] = 0.0;
                }
            }
        }
        let step = sol.x.amax();
        let ok = admissible(problem, &x_new, &u_new);
        let obj = objective(problem, &x_new, &u_new);
        log::debug!("sqp it {it}: qp iters {} step {step:.3e} admissible {ok} objective {obj:.6}", sol.iterations);
        let improves = ok && best.as_ref().is_none_or(|b| obj < b.2);
        if improves {
            best = Some((x_new.clone(), u_new.clone(), obj));
            u_ref = u_new;
            x_ref = x_new;
        } else if best.is_none() {
            u_ref = u_new;
            x_ref = x_new;
        } else if let Some(r) = trust.as_mut() {
            r[0] *= 0.5;
            r[1] *= 0.5;
        }
        if step < 1e-4 && best.is_some() {
            break;
        }
    }

    let runtime_ms = clock.elapsed().as_secs_f64() * 1e3;
    match best {
        Some((knots, inputs, obj)) => {
            let trajectory = Trajectory::new(problem.t_n, h, knots, model.kind).expect("positive step and knots");
            Ok(SolveOutcome::Plan(Plan {
                trajectory,
                inputs,
                diagnostics: Diagnostics {
                    status: PlanStatus::Solved,
                    qp_iterations,
                    sqp_iterations,
                    objective: obj,
                    runtime_ms,
                },
            }))
        }
        None => Ok(SolveOutcome::Infeasible(Diagnostics {
            status: PlanStatus::Infeasible,
            qp_iterations,
            sqp_iterations,
            objective: f64::NAN,
            runtime_ms,
        })),
    }
}

/// Largest per-knot defect `|x_{k+1} - step(x_k, u_k, h)|`.
pub fn dynamic_defect(model: &DynamicsModel, plan: &Plan) -> f64 {
    let knots = &plan.trajectory.knots;
    plan.inputs
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let pred = integrate(model, &knots[k], u, plan.trajectory.knot_dt);
            let mut d = [0.0; 4];
            for i in 0..4 {
                d[i] = knots[k + 1].0[i] - pred.0[i];
            }
            d[2] = if model.kind.has_heading() { wrap_angle(d[2]) } else { d[2] };
            d.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}
