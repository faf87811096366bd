//! Plot data as CSV: one position polyline per agent plus the swarm's
//! minimum pairwise distance over time.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::harness::metrics::distance_series;
use crate::harness::replay::{sample_times, Replay};
use crate::runtime::trace::{TraceError, TraceLog};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn write(path: PathBuf, body: &str) -> Result<PathBuf, PlotError> {
    fs::write(&path, body).map_err(|source| PlotError::Io { path: path.display().to_string(), source })?;
    Ok(path)
}

/// Writes `agent_<id>.csv` (`t,x,y,heading`) per agent and `distance.csv`
/// (`t,min_distance`) into `out_dir`; an empty trace writes nothing.
pub fn export_plot_data(trace: &TraceLog, out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    if trace.records.is_empty() {
        return Ok(Vec::new());
    }
    let replay = Replay::from_trace(trace)?;
    fs::create_dir_all(out_dir).map_err(|source| PlotError::Io { path: out_dir.display().to_string(), source })?;
    let dt = replay.settings.dt_check;
    let times = sample_times(0.0, replay.end_time(), dt);
    let mut files = Vec::new();
    for (&id, cfg) in &replay.agents {
        let mut body = String::from("t,x,y,heading\n");
        for &t in &times {
            let s = replay.executed(id, t);
            let heading = if cfg.model.kind.has_heading() { s.0[2] } else { 0.0 };
            writeln!(body, "{t:.4},{:.6},{:.6},{heading:.6}", s.0[0], s.0[1]).unwrap();
        }
        files.push(write(out_dir.join(format!("agent_{id}.csv")), &body)?);
    }
    if replay.agents.len() > 1 {
        let mut body = String::from("t,min_distance\n");
        for (t, d) in distance_series(&replay, dt) {
            writeln!(body, "{t:.4},{d:.6}").unwrap();
        }
        files.push(write(out_dir.join("distance.csv"), &body)?);
    }
    Ok(files)
}
