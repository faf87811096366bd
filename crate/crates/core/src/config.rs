//! Per-agent configuration shared by the planner and the runtime.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{is_equilibrium, AgentState, DynamicsModel};
use crate::geometry::Polygon;

pub type AgentId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("agent {id}: waiting time T_w = {t_w} must exceed calculation time T_c = {t_c}")]
    WaitNotLongerThanCompute { id: AgentId, t_c: f64, t_w: f64 },
    #[error("agent {id}: initial state is not an equilibrium (rest) state")]
    InitialNotEquilibrium { id: AgentId },
    #[error("agent {id}: {what}")]
    Invalid { id: AgentId, what: String },
}

/// Tracking-cost weights: state weights `q` (diagonal of Q) and input
/// weights `p` (diagonal of P).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub q: [f64; 4],
    pub p: [f64; 2],
}

impl Default for Weights {
    fn default() -> Self {
        Self { q: [10.0, 10.0, 1.0, 0.5], p: [2.0, 2.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub id: AgentId,
    pub model: DynamicsModel,
    /// Body-frame footprint polygon.
    pub footprint: Polygon,
    /// Calculation time T_c (s).
    pub t_c: f64,
    /// Waiting time T_w (s).
    pub t_w: f64,
    /// Sampling time h (s).
    pub h: f64,
    /// Planning horizon T (s).
    pub horizon: f64,
    pub initial: AgentState,
    pub target: AgentState,
    /// Offset of the agent's local clock; its loop starts at global time
    /// `start_time + clock_offset`.
    pub clock_offset: f64,
    pub comm_radius: f64,
    pub start_time: f64,
    pub weights: Weights,
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let id = self.id;
        let invalid = |what: String| Err(ConfigError::Invalid { id, what });
        if let Err(e) = self.model.validated() {
            return invalid(e.to_string());
        }
        if !(self.t_c > 0.0) {
            return invalid(format!("T_c must be positive, got {}", self.t_c));
        }
        if !(self.t_w > self.t_c) {
            return Err(ConfigError::WaitNotLongerThanCompute { id, t_c: self.t_c, t_w: self.t_w });
        }
        if !(self.h > 0.0) {
            return invalid(format!("h must be positive, got {}", self.h));
        }
        if !(self.horizon >= self.h) {
            return invalid(format!("horizon {} must be at least h = {}", self.horizon, self.h));
        }
        if !(self.comm_radius > 0.0) {
            return invalid("comm_radius must be positive".into());
        }
        if !self.clock_offset.is_finite() || !(self.start_time >= 0.0) {
            return invalid("clock_offset must be finite and start_time non-negative".into());
        }
        if self.weights.q.iter().any(|&w| !(w >= 0.0)) || self.weights.p.iter().any(|&w| !(w > 0.0)) {
            return invalid("Q must be positive semidefinite and P positive definite".into());
        }
        if !is_equilibrium(&self.model, &self.initial) {
            return Err(ConfigError::InitialNotEquilibrium { id });
        }
        if self.model.state_violation(&self.initial).is_some() || self.model.state_violation(&self.target).is_some() {
            return invalid("initial or target state outside the state bounds".into());
        }
        Ok(())
    }

    /// Number of knots past the initial one, `floor(T / h)`.
    pub fn horizon_steps(&self) -> usize {
        ((self.horizon / self.h) + 1e-9).floor() as usize
    }

    /// Global time of the first replanning start.
    pub fn first_start(&self) -> f64 {
        self.start_time + self.clock_offset
    }

    /// Length of one replanning cycle.
    pub fn period(&self) -> f64 {
        self.t_c + self.t_w
    }

    /// Footprint enlargement `max speed * h / 2` covering motion between a
    /// knot and the neighboring half-interval.
    pub fn inflation(&self) -> f64 {
        self.model.max_speed() * self.h / 2.0
    }

    /// Polygon used for half-space constraints at knots. Agents with a
    /// heading use a 16-gon around the footprint's circumscribed disc,
    /// independent of orientation.
    pub fn constraint_polygon(&self) -> Polygon {
        let rho = self.inflation();
        if self.model.kind.has_heading() {
            Polygon::regular(16, self.footprint.circumradius() + rho).expect("positive apothem")
        } else {
            self.footprint.offset(rho).expect("offsetting a convex polygon keeps it convex")
        }
    }
}
