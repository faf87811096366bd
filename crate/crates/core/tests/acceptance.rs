//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use asta::dynamics::{AgentState, ModelKind};
use asta::geometry::{polygons_intersect, separating_hyperplane, Polygon, Vec2};
use asta::harness::metrics::compute_metrics;
use asta::harness::replay::Replay;
use asta::harness::scenario::{antipodal8, random_scenario, Scenario};
use asta::harness::verify::{verify_trace, VerificationReport};
use asta::planner::{build_problem, dynamic_defect, solve, SolveOutcome, EPS_DC};
use asta::runtime::frequency_bound;
use asta::runtime::trace::{CommitRecord, StartRecord, TraceLog, TraceRecord, KIND_COMMIT, KIND_START};
use asta::runtime::{run, RunResult};
use asta::{AgentConfig, AgentId};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const MIN_DISTANCE: f64 = 0.40;
const COMPLETION_TIME: f64 = 12.0;
const MAX_LENGTH: f64 = 5.5;
const RANDOM_SEEDS: u64 = 100;
const SPOT_BOUNDS: [(AgentId, AgentId, f64); 2] = [(1, 2, 0.33), (3, 4, 0.47)];
const SPOT_TOL: f64 = 1e-12;
const GEOMETRY_PAIRS: usize = 1000;
const SOLVER_INSTANCES: usize = 50;
const KKT_TOL: f64 = 1e-6;
/// Oracle solutions must keep this much room to every input and speed bound.
const BOUND_ROOM: f64 = 1e-3;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn run_scenario(sc: &Scenario, seed: u64) -> RunResult {
    run(sc, seed, sc.settings.t_max).expect("scenario runs")
}

fn antipodal(result: &RunResult) -> Outcome {
    let m = compute_metrics(&result.trace).expect("metrics");
    let arrived = m.agents.iter().filter(|a| !a.timed_out).count();
    let pass = arrived == m.agents.len()
        && m.min_distance >= MIN_DISTANCE
        && m.completion_time <= COMPLETION_TIME
        && m.max_length <= MAX_LENGTH;
    outcome(
        "antipodal8 reproduction",
        pass,
        format!(
            "arrived {arrived}/{}, min distance {:.3} m (>= {MIN_DISTANCE}), completion {:.2} s (<= {COMPLETION_TIME}), max length {:.2} m (<= {MAX_LENGTH})",
            m.agents.len(),
            m.min_distance,
            m.completion_time,
            m.max_length
        ),
    )
}

fn random_reports() -> Vec<(u64, VerificationReport)> {
    (0..RANDOM_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let sc = random_scenario(seed);
            let result = run_scenario(&sc, seed);
            (seed, verify_trace(&result.trace, &sc).expect("trace verifies"))
        })
        .collect()
}

fn collisions(reports: &[(u64, VerificationReport)]) -> Outcome {
    let bad: Vec<u64> = reports.iter().filter(|(_, r)| !r.collisions.is_empty()).map(|(s, _)| *s).collect();
    let pairs: usize = reports.iter().map(|(_, r)| r.pairs_checked).sum();
    let dmin = reports.iter().map(|(_, r)| r.min_distance).fold(f64::INFINITY, f64::min);
    outcome(
        "collision-free random suite",
        bad.is_empty(),
        format!("{} scenarios, {pairs} pairs checked, min center distance {dmin:.3} m, seeds with collisions {bad:?}", reports.len()),
    )
}

fn intervals(reports: &[(u64, VerificationReport)]) -> Outcome {
    let sc = antipodal8();
    let agent = |id: AgentId| sc.agent(id).expect("agent exists");
    let mut spot = Vec::new();
    let mut spot_ok = true;
    for (a, b, expected) in SPOT_BOUNDS {
        let bound = frequency_bound(agent(a), agent(b));
        spot_ok &= (bound - expected).abs() <= SPOT_TOL;
        spot.push(format!("({a},{b}) {bound:.4} s"));
    }
    let bad: Vec<u64> = reports.iter().filter(|(_, r)| !r.intervals.is_empty()).map(|(s, _)| *s).collect();
    let checked: usize = reports.iter().map(|(_, r)| r.intervals_checked).sum();
    let startup: usize = reports.iter().map(|(_, r)| r.startup_intervals).sum();
    outcome(
        "renewal interval bound",
        spot_ok && bad.is_empty(),
        format!(
            "{checked} intervals checked ({startup} startup intervals unbounded), seeds over the bound {bad:?}, spot bounds {}",
            spot.join(", ")
        ),
    )
}

/// Moves one knot of a solved plan onto the nearest neighbor's position,
/// which lies outside any half space separating the two. Returns the
/// tampered trace with the agent and replanning index.
fn inject_fault(trace: &TraceLog) -> Option<(TraceLog, AgentId, usize)> {
    let replay = Replay::from_trace(trace).ok()?;
    let constrained: Vec<(String, usize)> = trace
        .of_kind(KIND_START)
        .filter_map(|(line, r)| {
            let s: StartRecord = r.decode(line).ok()?;
            (s.constraints > 0).then(|| (r.subject.clone(), s.index))
        })
        .collect();
    for (line, rec) in trace.of_kind(KIND_COMMIT) {
        let Ok(mut commit) = rec.decode::<CommitRecord>(line) else { continue };
        let solved = commit.status == asta::planner::PlanStatus::Solved && !commit.fallback;
        if !solved || commit.trajectory.knots.len() < 8 || !constrained.contains(&(rec.subject.clone(), commit.index)) {
            continue;
        }
        let Ok(id) = rec.subject.parse::<AgentId>() else { continue };
        let k = 5;
        let t = commit.trajectory.knot_time(k);
        let own = commit.trajectory.knots[k].position();
        let nearest = replay
            .pairs()
            .iter()
            .filter_map(|&(a, b)| if a == id { Some(b) } else if b == id { Some(a) } else { None })
            .map(|j| replay.executed(j, t).position())
            .min_by(|p, q| p.dist(own).total_cmp(&q.dist(own)))?;
        commit.trajectory.knots[k].0[0] = nearest.x;
        commit.trajectory.knots[k].0[1] = nearest.y;
        let index = commit.index;
        let mut tampered = trace.clone();
        tampered.records[line] = TraceRecord::new(rec.t, rec.subject.clone(), KIND_COMMIT, &commit);
        return Some((tampered, id, index));
    }
    None
}

fn conformance(reports: &[(u64, VerificationReport)], a8: &RunResult) -> Outcome {
    let sc = antipodal8();
    let a8_report = verify_trace(&a8.trace, &sc).expect("trace verifies");
    let bad: Vec<u64> = reports.iter().filter(|(_, r)| !r.conformance.is_empty()).map(|(s, _)| *s).collect();
    let plans: usize = reports.iter().map(|(_, r)| r.plans_checked).sum::<usize>() + a8_report.plans_checked;
    let clean = bad.is_empty() && a8_report.conformance.is_empty();
    let injected = match inject_fault(&a8.trace) {
        Some((tampered, id, index)) => {
            let report = verify_trace(&tampered, &sc).expect("tampered trace verifies");
            let f = &report.conformance;
            let hit = f.len() == 1 && f[0].agent == id && f[0].index == index;
            (hit, format!("injected fault at agent {id} plan {index}: {} finding(s)", f.len()))
        }
        None => (false, "no solved plan with constraints to tamper with".to_string()),
    };
    outcome(
        "plan conformance",
        clean && injected.0,
        format!(
            "{plans} plans checked, seeds with findings {bad:?}, antipodal8 findings {}, {}",
            a8_report.conformance.len(),
            injected.1
        ),
    )
}

fn random_polygon(rng: &mut ChaCha8Rng, center: Vec2) -> Polygon {
    loop {
        let n = rng.random_range(3..=8);
        let (a, b) = (rng.random_range(0.1..1.0), rng.random_range(0.1..1.0));
        let rot = rng.random_range(0.0..std::f64::consts::TAU);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let vertices = angles.iter().map(|&t| Vec2::new(a * t.cos(), b * t.sin()).rotate(rot) + center).collect();
        if let Ok(p) = Polygon::new(vertices) {
            return p;
        }
    }
}

/// Largest gap between the projections of the two polygons over all edge
/// normals; positive iff they are disjoint.
fn sat_gap(p: &Polygon, q: &Polygon) -> f64 {
    let axes = |poly: &Polygon| -> Vec<Vec2> {
        let v = poly.vertices();
        (0..v.len())
            .map(|i| {
                let e = v[(i + 1) % v.len()] - v[i];
                Vec2::new(e.y, -e.x).scale(1.0 / e.norm())
            })
            .collect()
    };
    let project = |poly: &Polygon, n: Vec2| {
        poly.vertices().iter().map(|v| v.dot(n)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
    };
    axes(p)
        .into_iter()
        .chain(axes(q))
        .map(|n| {
            let (plo, phi) = project(p, n);
            let (qlo, qhi) = project(q, n);
            (qlo - phi).max(plo - qhi)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn random_pair(rng: &mut ChaCha8Rng) -> (Polygon, Polygon) {
    let p = random_polygon(rng, Vec2::ZERO);
    let c = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    (p, random_polygon(rng, c))
}

fn geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut sep_failures = 0;
    let mut disjoint = 0;
    while disjoint < GEOMETRY_PAIRS {
        let (p, q) = random_pair(&mut rng);
        if sat_gap(&p, &q) <= 1e-5 {
            continue;
        }
        disjoint += 1;
        let strict = separating_hyperplane(&p, &q).is_ok_and(|h| {
            p.vertices().iter().all(|&v| h.signed_distance(v) > 0.0) && q.vertices().iter().all(|&v| h.signed_distance(v) < 0.0)
        });
        if !strict {
            sep_failures += 1;
        }
    }
    let mut disagreements = 0;
    let mut overlapping = 0;
    let mut compared = 0;
    while compared < GEOMETRY_PAIRS {
        let (p, q) = random_pair(&mut rng);
        let gap = sat_gap(&p, &q);
        if gap.abs() <= 1e-9 {
            continue;
        }
        compared += 1;
        overlapping += usize::from(gap < 0.0);
        if polygons_intersect(&p, &q) != (gap < 0.0) {
            disagreements += 1;
        }
    }
    outcome(
        "geometry oracles",
        sep_failures == 0 && disagreements == 0,
        format!(
            "separation sign failures {sep_failures}/{GEOMETRY_PAIRS}, SAT disagreements {disagreements}/{GEOMETRY_PAIRS} ({overlapping} overlapping)"
        ),
    )
}

/// Inputs minimizing the double-integrator tracking cost subject to rest at
/// the horizon, from the closed-form state map and one KKT solve.
fn kkt_oracle(cfg: &AgentConfig, x0: &AgentState, target: &AgentState) -> DVector<f64> {
    let k_max = cfg.horizon_steps();
    let h = cfg.h;
    let n = 2 * k_max;
    let (q, p) = (cfg.weights.q, cfg.weights.p);
    let mut hm = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    let mut add_square = |w: f64, row: &DVector<f64>, b: f64| {
        hm += row * row.transpose() * (2.0 * h * w);
        c += row * (2.0 * h * w * b);
    };
    for k in 1..=k_max {
        for axis in 0..2 {
            let mut pos = DVector::zeros(n);
            let mut vel = DVector::zeros(n);
            for j in 0..k {
                pos[2 * j + axis] = (k - j) as f64 * h * h - 0.5 * h * h;
                vel[2 * j + axis] = h;
            }
            let p0 = x0.0[axis] + k as f64 * h * x0.0[2 + axis] - target.0[axis];
            let v0 = x0.0[2 + axis] - target.0[2 + axis];
            add_square(q[axis], &pos, p0);
            add_square(q[2 + axis], &vel, v0);
        }
    }
    for j in 0..k_max {
        for m in 0..2 {
            hm[(2 * j + m, 2 * j + m)] += 2.0 * h * p[m];
        }
    }
    let mut kkt = DMatrix::zeros(n + 2, n + 2);
    kkt.view_mut((0, 0), (n, n)).copy_from(&hm);
    let mut rhs = DVector::zeros(n + 2);
    rhs.rows_mut(0, n).copy_from(&(-&c));
    for axis in 0..2 {
        for j in 0..k_max {
            kkt[(n + axis, 2 * j + axis)] = h;
            kkt[(2 * j + axis, n + axis)] = h;
        }
        rhs[n + axis] = -x0.0[2 + axis];
    }
    kkt.lu().solve(&rhs).expect("nonsingular KKT matrix").rows(0, n).into_owned()
}

fn oracle_within_bounds(cfg: &AgentConfig, x0: &AgentState, u: &DVector<f64>) -> bool {
    let (a_max, v_max) = (cfg.model.a_max, cfg.model.v_max);
    let mut v = [x0.0[2], x0.0[3]];
    for j in 0..cfg.horizon_steps() {
        for axis in 0..2 {
            if u[2 * j + axis].abs() > a_max - BOUND_ROOM {
                return false;
            }
            v[axis] += cfg.h * u[2 * j + axis];
            if v[axis].abs() > v_max - BOUND_ROOM {
                return false;
            }
        }
    }
    true
}

fn agent_of_kind(kind: ModelKind) -> AgentConfig {
    antipodal8().agents.into_iter().find(|a| a.model.kind == kind).expect("antipodal8 has every model")
}

fn solver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let di = agent_of_kind(ModelKind::DoubleIntegrator);
    let mut worst_kkt: f64 = 0.0;
    let mut kkt_failures = 0;
    let mut done = 0;
    while done < SOLVER_INSTANCES {
        let x0 = AgentState([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)]);
        let target = AgentState([x0.0[0] + rng.random_range(-0.8..0.8), x0.0[1] + rng.random_range(-0.8..0.8), 0.0, 0.0]);
        let oracle = kkt_oracle(&di, &x0, &target);
        if !oracle_within_bounds(&di, &x0, &oracle) {
            continue;
        }
        done += 1;
        let problem = build_problem(&di, x0, 0.0, &[], target, None).expect("problem builds");
        let err = match solve(&problem) {
            Ok(SolveOutcome::Plan(plan)) => plan
                .inputs
                .iter()
                .enumerate()
                .flat_map(|(j, u)| [(u.0[0] - oracle[2 * j]).abs(), (u.0[1] - oracle[2 * j + 1]).abs()])
                .fold(0.0, f64::max),
            _ => f64::INFINITY,
        };
        worst_kkt = worst_kkt.max(err);
        kkt_failures += usize::from(err > KKT_TOL);
    }

    let mut worst_defect: f64 = 0.0;
    let mut defect_failures = 0;
    for i in 0..SOLVER_INSTANCES {
        let cfg = agent_of_kind(if i % 2 == 0 { ModelKind::Unicycle } else { ModelKind::Bicycle });
        let x0 = AgentState([
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            rng.random_range(0.0..cfg.model.v_max),
        ]);
        let reach = rng.random_range(0.5..2.5);
        let dir = rng.random_range(0.0..std::f64::consts::TAU);
        let target = AgentState([x0.0[0] + reach * dir.cos(), x0.0[1] + reach * dir.sin(), dir, 0.0]);
        let problem = build_problem(&cfg, x0, 0.0, &[], target, None).expect("problem builds");
        let defect = match solve(&problem) {
            Ok(SolveOutcome::Plan(plan)) => dynamic_defect(&cfg.model, &plan),
            _ => f64::INFINITY,
        };
        worst_defect = worst_defect.max(defect);
        defect_failures += usize::from(!(defect < EPS_DC));
    }
    outcome(
        "solver oracles",
        kkt_failures == 0 && defect_failures == 0,
        format!(
            "double integrator vs KKT: {kkt_failures}/{SOLVER_INSTANCES} over {KKT_TOL:e} (worst {worst_kkt:.2e}); heading models: {defect_failures}/{SOLVER_INSTANCES} with defect >= {EPS_DC:e} or no plan (worst {worst_defect:.2e})"
        ),
    )
}

/// Trace text without the settings header, which records the parallel flag.
fn body(text: &str) -> &str {
    text.split_once('\n').map_or("", |(_, rest)| rest)
}

fn determinism(a8: &RunResult) -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (name, base) in [("antipodal8", antipodal8()), ("random 7", random_scenario(7))] {
        let seed = base.settings.seed;
        let sequential = run_scenario(&base, seed).trace.to_text();
        let again = run_scenario(&base, seed).trace.to_text();
        let mut par = base.clone();
        par.settings.parallel = true;
        let parallel = run_scenario(&par, seed).trace.to_text();
        let parallel_again = run_scenario(&par, seed).trace.to_text();
        let mut repeat = sequential == again && parallel == parallel_again;
        if name == "antipodal8" {
            repeat &= sequential == a8.trace.to_text();
        }
        let across = body(&sequential) == body(&parallel);
        pass &= repeat && across;
        details.push(format!(
            "{name}: repeats {}, parallel body {} to sequential",
            if repeat { "identical" } else { "differ" },
            if across { "identical" } else { "differs" }
        ));
    }
    outcome("determinism", pass, details.join("; "))
}

fn main() -> ExitCode {
    let clock = Instant::now();
    let a8_scenario = antipodal8();
    let a8 = run_scenario(&a8_scenario, a8_scenario.settings.seed);
    let reports = random_reports();
    let outcomes = [
        antipodal(&a8),
        collisions(&reports),
        intervals(&reports),
        conformance(&reports, &a8),
        geometry(),
        solver(),
        determinism(&a8),
    ];
    for o in &outcomes {
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("{} of {} criteria passed in {:.1} s", outcomes.len() - failed, outcomes.len(), clock.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
