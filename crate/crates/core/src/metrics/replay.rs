//! Self-describing trace files: a header line holding the canonical scenario,
//! then one JSON record per line. Replaying re-runs the scenario and compares
//! the regenerated file byte for byte.

use serde::{Deserialize, Serialize};

use super::run::{run_scenario, ScenarioRun};
use super::scenario::ScenarioConfig;
use super::MetricsError;

pub const TRACE_FORMAT: &str = "pmac-sim-trace/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub scenario: String,
}

pub fn trace_file(cfg: &ScenarioConfig, run: &ScenarioRun) -> String {
    let header = TraceHeader { format: TRACE_FORMAT.into(), scenario: cfg.to_text() };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    out.push_str(&run.trace.to_jsonl());
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub records: usize,
    pub config: ScenarioConfig,
}

pub fn replay(text: &str) -> Result<ReplayReport, MetricsError> {
    let first = text.lines().next().ok_or_else(|| MetricsError::Validation("empty trace file".into()))?;
    let header: TraceHeader = serde_json::from_str(first)
        .map_err(|e| MetricsError::Validation(format!("bad trace header: {e}")))?;
    if header.format != TRACE_FORMAT {
        return Err(MetricsError::Validation(format!("unsupported trace format `{}`", header.format)));
    }
    let cfg = ScenarioConfig::parse(&header.scenario)?;
    let run = run_scenario(&cfg)?;
    let again = trace_file(&cfg, &run);
    if again != text {
        let line = again.lines().zip(text.lines()).position(|(a, b)| a != b).map_or_else(
            || again.lines().count().min(text.lines().count()) + 1,
            |i| i + 1,
        );
        return Err(MetricsError::Replay(format!("trace diverges at line {line}")));
    }
    Ok(ReplayReport { records: run.trace.len(), config: cfg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Protocol;

    #[test]
    fn replay_accepts_own_output_and_rejects_edits() {
        let cfg = ScenarioConfig { protocol: Protocol::Csma, node_count: 3, ..Default::default() };
        let run = run_scenario(&cfg).unwrap();
        let text = trace_file(&cfg, &run);
        assert_eq!(replay(&text).unwrap().records, run.trace.len());
        let tampered = text.replacen("\"snr_db\":", "\"snr_db\":1", 1);
        assert_eq!(replay(&tampered).unwrap_err().exit_code(), 2);
        assert_eq!(replay("not json\n").unwrap_err().exit_code(), 1);
    }
}
