//! Scenario files (TOML) and the randomized scenario generator.
//!
//! ```toml
//! [settings]            # every key optional
//! t_max = 30.0          # s, default 60
//! dt_check = 0.01       # s, dense-check resolution, default 0.01
//! delay = 0.0           # s, constant message delay, default 0
//! jitter = 0.0          # s, uniform extra delay in [0, jitter), default 0
//! seed = 0              # default 0
//! parallel = false      # batch solves on a worker pool, default false
//!
//! [[agents]]
//! id = 1
//! model = { kind = "unicycle", v_max = 0.8, a_max = 1.5, omega_max = 2.0 }
//! footprint = { regular = { sides = 8, apothem = 0.2 } }  # or { vertices = [[x, y], ...] }
//! t_c = 0.16
//! t_w = 0.21
//! h = 0.15
//! horizon = 3.0
//! initial = [2.0, 0.0, 3.14159, 0.0]
//! target = [-2.0, 0.0, 3.14159, 0.0]
//! comm_radius = 10.0
//! clock_offset = 0.0    # optional, default 0
//! start_time = 0.0      # optional, default 0
//! weights = { q = [10, 10, 1, 1], p = [1, 1] }  # optional
//! ```

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{AgentConfig, AgentId, ConfigError, Weights};
use crate::dynamics::{AgentState, DynamicsModel};
use crate::geometry::{gjk_proximity, transform_footprint, GeometryError, Polygon, Vec2, EPS_SEP};
use crate::planner::DeadlockParams;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("agent {id}: bad footprint: {source}")]
    Footprint { id: AgentId, source: GeometryError },
    #[error("duplicate agent id {0}")]
    DuplicateId(AgentId),
    #[error("scenario has no agents")]
    NoAgents,
    #[error("agents {a} and {b} overlap at their initial states; colliding agents cannot establish a session")]
    InitialOverlap { a: AgentId, b: AgentId },
    #[error("invalid settings: {0}")]
    Settings(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Settings {
    pub t_max: f64,
    pub dt_check: f64,
    pub delay: f64,
    pub jitter: f64,
    pub seed: u64,
    pub parallel: bool,
    /// Abandon solves whose wall-clock time exceeds T_c.
    pub real_time: bool,
    /// Record wall-clock solve times in the trace (breaks byte-identity).
    pub record_timing: bool,
    pub deadlock: DeadlockParams,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            t_max: 60.0,
            dt_check: 0.01,
            delay: 0.0,
            jitter: 0.0,
            seed: 0,
            parallel: false,
            real_time: false,
            record_timing: false,
            deadlock: DeadlockParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub settings: Settings,
    pub agents: Vec<AgentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FootprintSpec {
    Regular { sides: usize, apothem: f64 },
    Vertices(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentSpec {
    id: AgentId,
    model: DynamicsModel,
    footprint: FootprintSpec,
    t_c: f64,
    t_w: f64,
    h: f64,
    horizon: f64,
    initial: [f64; 4],
    target: [f64; 4],
    comm_radius: f64,
    #[serde(default)]
    clock_offset: f64,
    #[serde(default)]
    start_time: f64,
    #[serde(default)]
    weights: Option<Weights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    settings: Settings,
    agents: Vec<AgentSpec>,
}

impl FootprintSpec {
    pub fn build(&self) -> Result<Polygon, GeometryError> {
        match self {
            FootprintSpec::Regular { sides, apothem } => Polygon::regular(*sides, *apothem),
            FootprintSpec::Vertices(v) => Polygon::try_from(v.clone()),
        }
    }
}

impl AgentSpec {
    fn into_config(self) -> Result<AgentConfig, ScenarioError> {
        let footprint = self.footprint.build().map_err(|source| ScenarioError::Footprint { id: self.id, source })?;
        Ok(AgentConfig {
            id: self.id,
            model: self.model,
            footprint,
            t_c: self.t_c,
            t_w: self.t_w,
            h: self.h,
            horizon: self.horizon,
            initial: AgentState(self.initial),
            target: AgentState(self.target),
            clock_offset: self.clock_offset,
            comm_radius: self.comm_radius,
            start_time: self.start_time,
            weights: self.weights.unwrap_or_default(),
        })
    }
}

pub fn initial_shape(cfg: &AgentConfig) -> Polygon {
    let heading = if cfg.model.kind.has_heading() { cfg.initial.0[2] } else { 0.0 };
    transform_footprint(&cfg.footprint, cfg.initial.position(), heading)
}

impl Scenario {
    pub fn new(settings: Settings, agents: Vec<AgentConfig>) -> Result<Self, ScenarioError> {
        let s = Self { settings, agents };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let st = &self.settings;
        if !(st.t_max > 0.0) || !(st.dt_check > 0.0) || !(st.delay >= 0.0) || !(st.jitter >= 0.0) {
            return Err(ScenarioError::Settings("t_max and dt_check must be positive, delay and jitter non-negative".into()));
        }
        if self.agents.is_empty() {
            return Err(ScenarioError::NoAgents);
        }
        let mut ids = BTreeSet::new();
        for a in &self.agents {
            if !ids.insert(a.id) {
                return Err(ScenarioError::DuplicateId(a.id));
            }
            a.validate()?;
        }
        let shapes: Vec<Polygon> = self.agents.iter().map(initial_shape).collect();
        for i in 0..shapes.len() {
            for j in i + 1..shapes.len() {
                if gjk_proximity(&shapes[i], &shapes[j]).distance <= 2.0 * EPS_SEP {
                    return Err(ScenarioError::InitialOverlap { a: self.agents[i].id, b: self.agents[j].id });
                }
            }
        }
        Ok(())
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentConfig> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let agents = file.agents.into_iter().map(AgentSpec::into_config).collect::<Result<Vec<_>, _>>()?;
        Scenario::new(file.settings, agents)
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    Scenario::parse(&text)
}

/// Footprint shared by the shipped scenarios: an octagon containing the
/// 0.4 m disc.
pub fn standard_footprint() -> Polygon {
    Polygon::regular(8, 0.2).expect("valid octagon")
}

/// The eight-agent antipodal swap on a 4 m circle.
pub fn antipodal8() -> Scenario {
    let text = include_str!("../../scenarios/antipodal8.toml");
    Scenario::parse(text).expect("bundled scenario is valid")
}

fn random_model(rng: &mut ChaCha8Rng) -> DynamicsModel {
    let v_max = rng.random_range(0.6..1.0);
    match rng.random_range(0..3) {
        0 => DynamicsModel::double_integrator(v_max, 1.5),
        1 => DynamicsModel::unicycle(v_max, 1.5, 2.0),
        _ => DynamicsModel::bicycle(v_max, 1.5, 0.6, 0.3),
    }
    .expect("valid parameters")
}

fn scatter(rng: &mut ChaCha8Rng, n: usize, side: f64, min_gap: f64) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = Vec::with_capacity(n);
    while pts.len() < n {
        let p = Vec2::new(rng.random_range(-side / 2.0..side / 2.0), rng.random_range(-side / 2.0..side / 2.0));
        if pts.iter().all(|q| q.dist(p) >= min_gap) {
            pts.push(p);
        }
    }
    pts
}

/// Randomized scenario: 4 to 10 agents of mixed models in a 6 m square,
/// random compute/wait times and clock offsets.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=10);
    let starts = scatter(&mut rng, n, 6.0, 0.7);
    let targets = scatter(&mut rng, n, 6.0, 0.7);
    let agents = (0..n)
        .map(|k| {
            let model = random_model(&mut rng);
            let t_c: f64 = rng.random_range(0.05..=0.2);
            let t_w: f64 = rng.random_range(t_c..0.3_f64).max(t_c + 1e-3);
            let theta0 = rng.random_range(-PI..PI);
            let theta1 = rng.random_range(-PI..PI);
            let (s, g) = (starts[k], targets[k]);
            AgentConfig {
                id: k as AgentId + 1,
                model,
                footprint: standard_footprint(),
                t_c,
                t_w,
                h: 0.15,
                horizon: 3.0,
                initial: AgentState([s.x, s.y, if model.kind.has_heading() { theta0 } else { 0.0 }, 0.0]),
                target: AgentState([g.x, g.y, if model.kind.has_heading() { theta1 } else { 0.0 }, 0.0]),
                clock_offset: rng.random_range(0.0..0.3),
                comm_radius: 10.0,
                start_time: 0.0,
                weights: Weights::default(),
            }
        })
        .collect();
    let settings = Settings { t_max: 40.0, seed, ..Settings::default() };
    Scenario::new(settings, agents).expect("generator respects scenario invariants")
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = r#"
[settings]
t_max = 10.0

[[agents]]
id = 1
model = { kind = "double_integrator", v_max = 1.0, a_max = 1.5 }
footprint = { regular = { sides = 8, apothem = 0.2 } }
t_c = 0.1
t_w = 0.15
h = 0.15
horizon = 3.0
initial = [0.0, 0.0, 0.0, 0.0]
target = [1.0, 0.0, 0.0, 0.0]
comm_radius = 5.0
"#;

    #[test]
    fn parses_minimal_file() {
        let s = Scenario::parse(ONE).unwrap();
        assert_eq!(s.agents.len(), 1);
        assert_eq!(s.settings.t_max, 10.0);
        assert_eq!(s.settings.dt_check, 0.01);
        assert_eq!(s.agents[0].weights, Weights::default());
    }

    #[test]
    fn rejects_bad_files() {
        let err = Scenario::parse(&ONE.replace("t_w = 0.15", "t_w = 0.1")).unwrap_err();
        assert!(err.to_string().contains("must exceed"), "{err}");
        let err = Scenario::parse(&ONE.replace("h = 0.15", "h = 0.15\ncolour = 1")).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)));
        let twice = format!("{ONE}{}", &ONE[ONE.find("[[agents]]").unwrap()..].replace("id = 1", "id = 2"));
        assert!(matches!(Scenario::parse(&twice).unwrap_err(), ScenarioError::InitialOverlap { a: 1, b: 2 }));
    }

    #[test]
    fn bundled_antipodal_matches_table() {
        let s = antipodal8();
        assert_eq!(s.agents.len(), 8);
        let rows = [(0.07, 0.09), (0.12, 0.14), (0.16, 0.21), (0.10, 0.17), (0.08, 0.10), (0.10, 0.14), (0.12, 0.16), (0.16, 0.18)];
        for (a, (t_c, t_w)) in s.agents.iter().zip(rows) {
            assert_eq!((a.t_c, a.t_w, a.h, a.horizon_steps()), (t_c, t_w, 0.15, 20));
            assert!((a.initial.position().norm() - 2.0).abs() < 1e-9);
            assert!((a.initial.position() + a.target.position()).norm() < 1e-9);
            assert!(a.footprint.vertices().iter().all(|v| v.norm() >= 0.2 - 1e-12));
        }
    }

    #[test]
    fn random_scenarios_are_valid_and_reproducible() {
        for seed in 0..20 {
            let s = random_scenario(seed);
            assert!((4..=10).contains(&s.agents.len()));
            assert_eq!(s, random_scenario(seed));
            for a in &s.agents {
                assert!(a.t_c >= 0.05 && a.t_c <= 0.2 && a.t_w > a.t_c && a.t_w <= 0.3);
            }
        }
    }
}
