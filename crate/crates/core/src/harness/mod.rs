//! Scenario ingestion, trace verification, metrics and plot-data export.

pub mod metrics;
pub mod plot;
pub mod replay;
pub mod scenario;
pub mod verify;

pub use metrics::{compute_metrics, Metrics};
pub use plot::export_plot_data;
pub use scenario::{load_scenario, Scenario, Settings};
pub use verify::{verify_trace, VerificationReport};
