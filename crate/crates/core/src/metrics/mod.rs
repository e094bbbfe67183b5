//! Scenario files, experiment orchestration, utilization and CSV output.

pub mod csv;
pub mod replay;
pub mod run;
pub mod scenario;
pub mod utilization;

use std::fmt;

use crate::error::SimError;

pub use self::csv::{emit_csv, read_csv, write_csv, write_plot_data, CSV_HEADER};
pub use self::replay::{replay, trace_file, ReplayReport, TRACE_FORMAT};
pub use self::run::{run_scenario, sweep_frequencies, sweep_nodes, MetricsRow, ScenarioRun, SweepRow};
pub use self::scenario::{Calibration, ConfigError, ScenarioConfig, TopologySpec};
pub use self::utilization::{compute_utilization, utilization_sample, UtilizationSample};

#[derive(Debug)]
pub enum MetricsError {
    Config(ConfigError),
    Validation(String),
    Simulation(SimError),
    Io(std::io::Error),
    Csv(::csv::Error),
    /// A replayed run diverged from its recorded trace.
    Replay(String),
}

impl MetricsError {
    /// 1 for bad input, 2 for a violated simulation contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            MetricsError::Simulation(_) | MetricsError::Replay(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::Config(e) => write!(f, "invalid scenario: {e}"),
            MetricsError::Validation(m) => write!(f, "invalid input: {m}"),
            MetricsError::Simulation(e) => write!(f, "simulation error: {e}"),
            MetricsError::Io(e) => write!(f, "i/o error: {e}"),
            MetricsError::Csv(e) => write!(f, "csv error: {e}"),
            MetricsError::Replay(m) => write!(f, "replay mismatch: {m}"),
        }
    }
}

impl std::error::Error for MetricsError {}

impl From<ConfigError> for MetricsError {
    fn from(e: ConfigError) -> Self {
        MetricsError::Config(e)
    }
}

impl From<SimError> for MetricsError {
    fn from(e: SimError) -> Self {
        MetricsError::Simulation(e)
    }
}

impl From<std::io::Error> for MetricsError {
    fn from(e: std::io::Error) -> Self {
        MetricsError::Io(e)
    }
}

impl From<::csv::Error> for MetricsError {
    fn from(e: ::csv::Error) -> Self {
        MetricsError::Csv(e)
    }
}
