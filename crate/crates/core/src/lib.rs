//! Asynchronous spatial-temporal allocation for multi-agent trajectory
//! planning.
//!
//! Agents with heterogeneous dynamics replan on their own clocks. Each pair
//! of neighbors agrees on a time-indexed sequence of separating half spaces
//! (an allocation), and every plan keeps the agent inside the half spaces in
//! force along its horizon.

pub mod allocation;
pub mod config;
pub mod dynamics;
pub mod geometry;
pub mod harness;
pub mod planner;
pub mod runtime;
pub mod trajectory;

pub use allocation::{make_renewal, Allocation, Renewal, Stamp};
pub use config::{AgentConfig, AgentId, Weights};
pub use dynamics::{AgentState, ControlInput, DynamicsModel, ModelKind};
pub use geometry::{separating_hyperplane, HalfSpace, Polygon, Vec2};
pub use harness::{compute_metrics, load_scenario, verify_trace, Metrics, Scenario, Settings, VerificationReport};
pub use planner::{build_problem, solve, Plan, PlanningProblem, SolveOutcome};
pub use runtime::trace::TraceLog;
pub use runtime::{run, RunResult};
pub use trajectory::Trajectory;
