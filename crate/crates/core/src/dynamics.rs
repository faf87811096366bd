//! Heterogeneous agent dynamics: double integrator, unicycle and kinematic
//! bicycle, with their state/input bounds and numerical integration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

/// Tolerance on state/input bound membership.
pub const EPS_DYN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DoubleIntegrator,
    Unicycle,
    Bicycle,
}

impl ModelKind {
    /// Whether the footprint turns with the state's heading.
    pub fn has_heading(self) -> bool {
        !matches!(self, ModelKind::DoubleIntegrator)
    }
}

/// State vector. Double integrator: `[p_x, p_y, v_x, v_y]`; unicycle and
/// bicycle: `[p_x, p_y, theta, v]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentState(pub [f64; 4]);

/// Input vector. Double integrator: `[a_x, a_y]`; unicycle: `[a, omega]`;
/// bicycle: `[a, delta]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlInput(pub [f64; 2]);

impl AgentState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.0[0], self.0[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsModel {
    pub kind: ModelKind,
    pub v_max: f64,
    pub a_max: f64,
    /// Unicycle turn-rate bound (rad/s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    /// Bicycle steering bound (rad).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_max: Option<f64>,
    /// Bicycle wheelbase (m).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wheelbase: Option<f64>,
}

/// A state or input that left its admissible set during playback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundViolation {
    pub component: usize,
    pub excess: f64,
}

fn positive(name: &str, v: Option<f64>) -> Result<f64, DynamicsError> {
    match v {
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => Err(DynamicsError::InvalidParameter(format!("{name} must be positive, got {x}"))),
        None => Err(DynamicsError::InvalidParameter(format!("{name} is required"))),
    }
}

impl DynamicsModel {
    pub fn double_integrator(v_max: f64, a_max: f64) -> Result<Self, DynamicsError> {
        Self { kind: ModelKind::DoubleIntegrator, v_max, a_max, omega_max: None, delta_max: None, wheelbase: None }
            .validated()
    }

    pub fn unicycle(v_max: f64, a_max: f64, omega_max: f64) -> Result<Self, DynamicsError> {
        Self { kind: ModelKind::Unicycle, v_max, a_max, omega_max: Some(omega_max), delta_max: None, wheelbase: None }
            .validated()
    }

    pub fn bicycle(v_max: f64, a_max: f64, delta_max: f64, wheelbase: f64) -> Result<Self, DynamicsError> {
        Self {
            kind: ModelKind::Bicycle,
            v_max,
            a_max,
            omega_max: None,
            delta_max: Some(delta_max),
            wheelbase: Some(wheelbase),
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self, DynamicsError> {
        positive("v_max", Some(self.v_max))?;
        positive("a_max", Some(self.a_max))?;
        match self.kind {
            ModelKind::DoubleIntegrator => {
                if self.omega_max.is_some() || self.delta_max.is_some() || self.wheelbase.is_some() {
                    return Err(DynamicsError::InvalidParameter(
                        "double integrator takes only v_max and a_max".into(),
                    ));
                }
            }
            ModelKind::Unicycle => {
                positive("omega_max", self.omega_max)?;
                if self.delta_max.is_some() || self.wheelbase.is_some() {
                    return Err(DynamicsError::InvalidParameter(
                        "unicycle takes no steering bound or wheelbase".into(),
                    ));
                }
            }
            ModelKind::Bicycle => {
                let d = positive("delta_max", self.delta_max)?;
                positive("wheelbase", self.wheelbase)?;
                if d >= std::f64::consts::FRAC_PI_2 {
                    return Err(DynamicsError::InvalidParameter("delta_max must be below pi/2".into()));
                }
                if self.omega_max.is_some() {
                    return Err(DynamicsError::InvalidParameter("bicycle takes no omega_max".into()));
                }
            }
        }
        Ok(self)
    }

    /// Largest Euclidean speed admitted by the state bounds.
    pub fn max_speed(&self) -> f64 {
        match self.kind {
            ModelKind::DoubleIntegrator => std::f64::consts::SQRT_2 * self.v_max,
            _ => self.v_max,
        }
    }

    /// Componentwise input bounds `(lower, upper)`.
    pub fn input_bounds(&self) -> ([f64; 2], [f64; 2]) {
        let second = match self.kind {
            ModelKind::DoubleIntegrator => self.a_max,
            ModelKind::Unicycle => self.omega_max.unwrap_or(0.0),
            ModelKind::Bicycle => self.delta_max.unwrap_or(0.0),
        };
        ([-self.a_max, -second], [self.a_max, second])
    }

    /// Indices and `(lower, upper)` bounds of the bounded state components.
    pub fn state_bounds(&self) -> Vec<(usize, f64, f64)> {
        match self.kind {
            ModelKind::DoubleIntegrator => vec![(2, -self.v_max, self.v_max), (3, -self.v_max, self.v_max)],
            _ => vec![(3, 0.0, self.v_max)],
        }
    }

    pub fn heading(&self, state: &AgentState) -> f64 {
        if self.kind.has_heading() {
            state.0[2]
        } else {
            0.0
        }
    }

    pub fn speed(&self, state: &AgentState) -> f64 {
        match self.kind {
            ModelKind::DoubleIntegrator => Vec2::new(state.0[2], state.0[3]).norm(),
            _ => state.0[3].abs(),
        }
    }

    pub fn state_violation(&self, state: &AgentState) -> Option<BoundViolation> {
        self.state_bounds()
            .into_iter()
            .filter_map(|(i, lo, hi)| {
                let x = state.0[i];
                let excess = (lo - x).max(x - hi);
                (excess > EPS_DYN).then_some(BoundViolation { component: i, excess })
            })
            .next()
    }

    pub fn input_violation(&self, input: &ControlInput) -> Option<BoundViolation> {
        let (lo, hi) = self.input_bounds();
        (0..2)
            .filter_map(|i| {
                let x = input.0[i];
                let excess = (lo[i] - x).max(x - hi[i]);
                (excess > EPS_DYN).then_some(BoundViolation { component: i, excess })
            })
            .next()
    }

    pub fn clamp_state(&self, state: &AgentState) -> AgentState {
        let mut s = *state;
        for (i, lo, hi) in self.state_bounds() {
            s.0[i] = s.0[i].clamp(lo, hi);
        }
        s
    }
}

pub fn derivative(model: &DynamicsModel, state: &AgentState, input: &ControlInput) -> [f64; 4] {
    let x = &state.0;
    let u = &input.0;
    match model.kind {
        ModelKind::DoubleIntegrator => [x[2], x[3], u[0], u[1]],
        ModelKind::Unicycle => {
            let (s, c) = x[2].sin_cos();
            [x[3] * c, x[3] * s, u[1], u[0]]
        }
        ModelKind::Bicycle => {
            let (s, c) = x[2].sin_cos();
            let l = model.wheelbase.expect("validated bicycle has a wheelbase");
            [x[3] * c, x[3] * s, x[3] * u[1].tan() / l, u[0]]
        }
    }
}

/// Slice-based entry point that checks dimensions.
pub fn derivative_checked(model: &DynamicsModel, state: &[f64], input: &[f64]) -> Result<[f64; 4], DynamicsError> {
    if state.len() != 4 || input.len() != 2 {
        return Err(DynamicsError::InvalidArgument("state must have 4 and input 2 components"));
    }
    let s = AgentState([state[0], state[1], state[2], state[3]]);
    let u = ControlInput([input[0], input[1]]);
    Ok(derivative(model, &s, &u))
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// One integration step with the input held constant, before any clamping.
pub fn integrate(model: &DynamicsModel, state: &AgentState, input: &ControlInput, h: f64) -> AgentState {
    let x = state.0;
    match model.kind {
        ModelKind::DoubleIntegrator => {
            let u = input.0;
            AgentState([
                x[0] + x[2] * h + 0.5 * u[0] * h * h,
                x[1] + x[3] * h + 0.5 * u[1] * h * h,
                x[2] + u[0] * h,
                x[3] + u[1] * h,
            ])
        }
        _ => {
            let add = |a: [f64; 4], k: [f64; 4], s: f64| [a[0] + s * k[0], a[1] + s * k[1], a[2] + s * k[2], a[3] + s * k[3]];
            let f = |s: [f64; 4]| derivative(model, &AgentState(s), input);
            let k1 = f(x);
            let k2 = f(add(x, k1, h / 2.0));
            let k3 = f(add(x, k2, h / 2.0));
            let k4 = f(add(x, k3, h));
            let mut out = [0.0; 4];
            for i in 0..4 {
                out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            out[2] = wrap_angle(out[2]);
            AgentState(out)
        }
    }
}

/// Integrates one step and clamps states that leave the admissible set by
/// more than [`EPS_DYN`]; the violation is returned and logged.
pub fn step(
    model: &DynamicsModel,
    state: &AgentState,
    input: &ControlInput,
    h: f64,
) -> Result<(AgentState, Option<BoundViolation>), DynamicsError> {
    if !(h > 0.0) {
        return Err(DynamicsError::InvalidArgument("step size must be positive"));
    }
    let next = integrate(model, state, input, h);
    match model.state_violation(&next) {
        Some(v) => {
            log::warn!("state component {} out of bounds by {:.3e}, clamping", v.component, v.excess);
            Ok((model.clamp_state(&next), Some(v)))
        }
        None => Ok((next, None)),
    }
}

pub fn is_equilibrium(model: &DynamicsModel, state: &AgentState) -> bool {
    match model.kind {
        ModelKind::DoubleIntegrator => state.0[2].abs() <= EPS_DYN && state.0[3].abs() <= EPS_DYN,
        _ => state.0[3].abs() <= EPS_DYN,
    }
}

/// An input certifying equilibrium membership (zero is always one).
pub fn equilibrium_input(_model: &DynamicsModel) -> ControlInput {
    ControlInput([0.0, 0.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uni() -> DynamicsModel {
        DynamicsModel::unicycle(1.0, 2.0, 2.0).unwrap()
    }

    #[test]
    fn derivative_matches_model_definitions() {
        let di = DynamicsModel::double_integrator(1.0, 1.5).unwrap();
        assert_eq!(
            derivative(&di, &AgentState([1.0, 2.0, 0.5, -0.5]), &ControlInput([0.1, 0.2])),
            [0.5, -0.5, 0.1, 0.2]
        );
        assert_eq!(derivative(&uni(), &AgentState([0.0, 0.0, 0.0, 1.0]), &ControlInput([0.0, 0.3])), [1.0, 0.0, 0.3, 0.0]);
        let bi = DynamicsModel::bicycle(1.0, 2.0, 0.6, 0.37).unwrap();
        assert_eq!(derivative(&bi, &AgentState([0.0, 0.0, 0.0, 1.0]), &ControlInput([0.0, 0.0])), [1.0, 0.0, 0.0, 0.0]);
        assert!(derivative_checked(&di, &[0.0; 3], &[0.0; 2]).is_err());
    }

    #[test]
    fn model_validation() {
        assert!(DynamicsModel::double_integrator(0.0, 1.0).is_err());
        assert!(DynamicsModel::unicycle(1.0, 1.0, -1.0).is_err());
        let mut m = DynamicsModel::bicycle(1.0, 1.0, 0.5, 0.3).unwrap();
        m.wheelbase = None;
        assert!(m.validated().is_err());
        let mut d = DynamicsModel::double_integrator(1.0, 1.0).unwrap();
        d.wheelbase = Some(0.3);
        assert!(d.validated().is_err());
    }

    #[test]
    fn ballistic_and_fixed_point_steps() {
        let di = DynamicsModel::double_integrator(1.0, 1.5).unwrap();
        let (s, v) = step(&di, &AgentState([0.0, 0.0, 0.5, -0.2]), &ControlInput([0.0, 0.0]), 0.15).unwrap();
        assert!(v.is_none());
        assert_relative_eq!(s.0[0], 0.075, epsilon = 1e-15);
        assert_relative_eq!(s.0[1], -0.03, epsilon = 1e-15);
        assert_eq!(&s.0[2..], &[0.5, -0.2]);
        let (s, _) = step(&uni(), &AgentState([0.0; 4]), &ControlInput([0.0, 0.0]), 0.15).unwrap();
        assert_eq!(s, AgentState([0.0; 4]));
        assert!(step(&uni(), &AgentState([0.0; 4]), &ControlInput([0.0, 0.0]), 0.0).is_err());
    }

    #[test]
    fn step_clamps_out_of_bound_speed() {
        let (s, v) = step(&uni(), &AgentState([0.0, 0.0, 0.0, 0.95]), &ControlInput([2.0, 0.0]), 0.15).unwrap();
        assert_eq!(v.unwrap().component, 3);
        assert_eq!(s.0[3], 1.0);
    }

    #[test]
    fn equilibrium_membership() {
        let di = DynamicsModel::double_integrator(1.0, 1.5).unwrap();
        assert!(is_equilibrium(&di, &AgentState([0.0; 4])));
        assert!(!is_equilibrium(&di, &AgentState([0.0, 0.0, 1.0, 0.0])));
        let s = AgentState([3.0, 4.0, 1.2, 0.0]);
        assert!(is_equilibrium(&uni(), &s));
        assert_eq!(derivative(&uni(), &s, &equilibrium_input(&uni())), [0.0; 4]);
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
    }
}
