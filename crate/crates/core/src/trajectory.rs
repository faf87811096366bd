//! Committed trajectories: knot lists with linear interpolation between knots
//! and a constant tail past the last knot.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{is_equilibrium, wrap_angle, AgentState, DynamicsModel, ModelKind};
use crate::geometry::{polygons_intersect, transform_footprint, Polygon};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("time {t} precedes trajectory start {start}")]
    OutOfDomain { t: f64, start: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// Wire form exchanged between agents: `(start_time, knot_dt, knots, model_kind)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start_time: f64,
    pub knot_dt: f64,
    pub knots: Vec<AgentState>,
    pub model_kind: ModelKind,
}

impl Trajectory {
    pub fn new(start_time: f64, knot_dt: f64, knots: Vec<AgentState>, model_kind: ModelKind) -> Result<Self, TrajectoryError> {
        if !(knot_dt > 0.0) {
            return Err(TrajectoryError::InvalidArgument("knot spacing must be positive"));
        }
        if knots.is_empty() {
            return Err(TrajectoryError::InvalidArgument("trajectory needs at least one knot"));
        }
        Ok(Self { start_time, knot_dt, knots, model_kind })
    }

    /// Planning horizon `knot_dt * (len - 1)`.
    pub fn horizon(&self) -> f64 {
        self.knot_dt * (self.knots.len() - 1) as f64
    }

    /// Time of the last knot; the state is constant afterwards.
    pub fn end_time(&self) -> f64 {
        self.knot_time(self.knots.len() - 1)
    }

    pub fn knot_time(&self, k: usize) -> f64 {
        self.start_time + self.knot_dt * k as f64
    }

    pub fn last(&self) -> &AgentState {
        self.knots.last().expect("non-empty by construction")
    }

    pub fn sample(&self, t: f64) -> Result<AgentState, TrajectoryError> {
        if t < self.start_time {
            return Err(TrajectoryError::OutOfDomain { t, start: self.start_time });
        }
        Ok(self.sample_clamped(t))
    }

    /// Like [`Trajectory::sample`] but times before the start return the
    /// first knot.
    pub fn sample_clamped(&self, t: f64) -> AgentState {
        let s = (t - self.start_time) / self.knot_dt;
        if s <= 0.0 {
            return self.knots[0];
        }
        let last = self.knots.len() - 1;
        if s >= last as f64 {
            return self.knots[last];
        }
        let k = s.floor() as usize;
        let frac = s - k as f64;
        if frac == 0.0 {
            return self.knots[k];
        }
        interpolate(self.model_kind, &self.knots[k], &self.knots[k + 1], frac)
    }

    pub fn shape_at(&self, footprint: &Polygon, t: f64) -> Polygon {
        let s = self.sample_clamped(t);
        let heading = if self.model_kind.has_heading() { s.0[2] } else { 0.0 };
        transform_footprint(footprint, s.position(), heading)
    }
}

/// Componentwise linear interpolation; headings follow the shorter arc.
pub fn interpolate(kind: ModelKind, a: &AgentState, b: &AgentState, frac: f64) -> AgentState {
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = a.0[i] + frac * (b.0[i] - a.0[i]);
    }
    if kind.has_heading() {
        out[2] = wrap_angle(a.0[2] + frac * wrap_angle(b.0[2] - a.0[2]));
    }
    AgentState(out)
}

/// Single-knot trajectory holding a rest state forever.
pub fn constant_trajectory(model: &DynamicsModel, state: AgentState, t0: f64, knot_dt: f64) -> Result<Trajectory, TrajectoryError> {
    if !is_equilibrium(model, &state) {
        return Err(TrajectoryError::InvalidArgument("initial state must be an equilibrium"));
    }
    Trajectory::new(t0, knot_dt, vec![state], model.kind)
}

/// Earliest time on the grid `t0, t0 + dt, ..., <= t1` where the two shapes
/// intersect. Sample times before a trajectory's start use its first knot.
pub fn first_collision(
    traj_i: &Trajectory,
    footprint_i: &Polygon,
    traj_j: &Trajectory,
    footprint_j: &Polygon,
    t0: f64,
    t1: f64,
    dt_check: f64,
) -> Result<Option<f64>, TrajectoryError> {
    if !(t0 < t1) || !(dt_check > 0.0) {
        return Err(TrajectoryError::InvalidArgument("need t0 < t1 and dt_check > 0"));
    }
    let reach = footprint_i.circumradius() + footprint_j.circumradius();
    let n = ((t1 - t0) / dt_check + 1e-9).floor() as usize;
    for k in 0..=n {
        let t = t0 + dt_check * k as f64;
        let si = traj_i.sample_clamped(t);
        let sj = traj_j.sample_clamped(t);
        if si.position().dist(sj.position()) > reach {
            continue;
        }
        if polygons_intersect(&traj_i.shape_at(footprint_i, t), &traj_j.shape_at(footprint_j, t)) {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn di() -> DynamicsModel {
        DynamicsModel::double_integrator(1.0, 1.5).unwrap()
    }

    fn line(start: f64) -> Trajectory {
        let knots = (0..=5).map(|k| AgentState([k as f64, 0.0, 1.0, 0.0])).collect();
        Trajectory::new(start, 1.0, knots, ModelKind::DoubleIntegrator).unwrap()
    }

    #[test]
    fn sample_endpoints_and_tail() {
        let tr = line(2.0);
        assert_eq!(tr.sample(2.0).unwrap(), tr.knots[0]);
        assert_eq!(tr.sample(2.0 + 10.0 * tr.horizon()).unwrap(), *tr.last());
        assert_eq!(tr.sample(5.5).unwrap().0[0], 3.5);
        assert!(matches!(tr.sample(1.0), Err(TrajectoryError::OutOfDomain { .. })));
    }

    #[test]
    fn heading_interpolates_along_short_arc() {
        use std::f64::consts::PI;
        let a = AgentState([0.0, 0.0, PI - 0.1, 0.0]);
        let b = AgentState([0.0, 0.0, -PI + 0.1, 0.0]);
        let m = interpolate(ModelKind::Unicycle, &a, &b, 0.5);
        assert!((m.0[2].abs() - PI).abs() < 1e-12);
    }

    #[test]
    fn constant_trajectory_requires_rest() {
        let tr = constant_trajectory(&di(), AgentState([1.0, 1.0, 0.0, 0.0]), 0.0, 0.15).unwrap();
        assert_eq!(tr.sample(123.0).unwrap(), AgentState([1.0, 1.0, 0.0, 0.0]));
        assert!(constant_trajectory(&di(), AgentState([0.0, 0.0, 1.0, 0.0]), 0.0, 0.15).is_err());
        let u = DynamicsModel::unicycle(1.0, 1.0, 1.0).unwrap();
        let s = AgentState([2.0, 3.0, 0.7, 0.0]);
        assert_eq!(constant_trajectory(&u, s, 5.0, 0.15).unwrap().sample(100.0).unwrap(), s);
    }

    #[test]
    fn static_collision_cases() {
        let fp = Polygon::regular(8, 0.2).unwrap();
        let a = constant_trajectory(&di(), AgentState([0.0; 4]), 0.0, 0.1).unwrap();
        let b = constant_trajectory(&di(), AgentState([3.0, 0.0, 0.0, 0.0]), 0.0, 0.1).unwrap();
        assert_eq!(first_collision(&a, &fp, &b, &fp, 0.0, 5.0, 0.01).unwrap(), None);
        assert_eq!(first_collision(&a, &fp, &a, &fp, 0.5, 5.0, 0.01).unwrap(), Some(0.5));
        assert!(first_collision(&a, &fp, &b, &fp, 1.0, 1.0, 0.01).is_err());
    }
}
