//! Runs one scenario end to end: establishment, a data phase, and metrics.

use serde::{Deserialize, Serialize};

use crate::csma::{CsmaConfig, CsmaNetwork};
use crate::engine::SimTime;
use crate::fdplc::{establish_fd_network, FdAccess, FdConfig};
use crate::frame::FrameKind;
use crate::ids::NodeId;
use crate::medium::{LinkFreqs, Medium};
use crate::pmac::{PmacConfig, PmacNetwork};
use crate::report::{EstablishReport, Protocol};
use crate::sweep::{comm_count_formula, run_sweep, SweepConfig, SweepMechanism};
use crate::trace::Trace;

use super::scenario::{Calibration, ConfigError, ScenarioConfig};
use super::utilization::compute_utilization;
use super::MetricsError;

/// Per-node establishment cost of the preamble-based protocols under the
/// fitted calibration preset.
pub const FITTED_PMAC_PER_NODE_US: u64 = 80_000;
/// Per-node establishment cost of the CSMA protocols under the same preset.
pub const FITTED_CSMA_PER_NODE_US: u64 = 5_120_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub protocol: Protocol,
    pub node_count: usize,
    pub networking_time_us: u64,
    pub establish_util: f64,
    pub data_util: f64,
    pub seed: u64,
}

pub struct ScenarioRun {
    pub row: MetricsRow,
    pub report: EstablishReport,
    /// Full trace: establishment followed by the data phase.
    pub trace: Trace,
    pub establish_window: (SimTime, SimTime),
    pub data_window: (SimTime, SimTime),
}

pub fn calibrated_time(cfg: &ScenarioConfig, report: &EstablishReport) -> u64 {
    match cfg.calibration {
        Calibration::Physical => report.total_time.as_micros(),
        Calibration::Fitted2021 => {
            let per_node = if report.protocol.uses_preamble_access() { FITTED_PMAC_PER_NODE_US } else { FITTED_CSMA_PER_NODE_US };
            report.joins.len() as u64 * per_node
        }
    }
}

/// Each joined node, in SID order, is polled down its route and answers with
/// one data packet up the same route.
pub fn run_data_phase(
    medium: &mut Medium,
    report: &EstablishReport,
    freqs: &LinkFreqs,
    packet: SimTime,
) -> Result<(SimTime, SimTime), crate::error::SimError> {
    let start = medium.now();
    let mut joins = report.joins.clone();
    joins.sort_by_key(|j| j.sid);
    for j in &joins {
        let Some(path) = report.path_to(j.node) else { continue };
        if medium.send_path(&path, &FrameKind::Poll, packet, freqs)?.is_some() {
            let up: Vec<NodeId> = path.iter().rev().copied().collect();
            medium.send_path(&up, &FrameKind::Data, packet, freqs)?;
        }
    }
    Ok((start, medium.now()))
}

fn utilization(trace: &Trace, window: (SimTime, SimTime)) -> Result<f64, MetricsError> {
    if window.1 <= window.0 {
        return Ok(0.0);
    }
    Ok(compute_utilization(trace, window.0, window.1)?)
}

pub fn pmac_config(cfg: &ScenarioConfig) -> PmacConfig {
    PmacConfig {
        timing: cfg.timing(),
        mode: cfg.access_mode,
        heartbeat_us: cfg.heartbeat_us,
        max_pte_rounds: cfg.max_pte_rounds,
        freq_index: cfg.control_freq,
        ..PmacConfig::default()
    }
}

pub fn fd_config(cfg: &ScenarioConfig) -> FdConfig {
    FdConfig {
        timing: cfg.timing(),
        beacon_plan: cfg.beacon_plan,
        control_freq: cfg.control_freq,
        sweep: SweepConfig { packet_us: cfg.packet_us, retune_us: cfg.retune_us },
        pmac: pmac_config(cfg),
        ..FdConfig::default()
    }
}

pub fn build_medium(cfg: &ScenarioConfig) -> Result<Medium, MetricsError> {
    cfg.validate()?;
    let channel = cfg.build_channel().map_err(|e| ConfigError { line: None, message: e.to_string() })?;
    Ok(Medium::new(channel, cfg.seed))
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun, MetricsError> {
    let medium = build_medium(cfg)?;
    let gateway = cfg.gateway();
    let (report, mut medium, freqs) = match cfg.protocol {
        Protocol::Pmac => {
            let mut net = PmacNetwork::new(medium, gateway, pmac_config(cfg))?;
            let report = net.establish_network()?;
            let freqs = net.link_freqs().clone();
            (report, net.into_medium(), freqs)
        }
        Protocol::Csma => {
            let ccfg = CsmaConfig { timing: cfg.timing(), freq_index: cfg.control_freq, ..CsmaConfig::default() };
            let mut net = CsmaNetwork::new(medium, gateway, ccfg)?;
            let report = net.establish_network()?;
            (report, net.into_medium(), LinkFreqs::new(cfg.control_freq))
        }
        Protocol::FdPmac | Protocol::FdCsma => {
            let access = if cfg.protocol == Protocol::FdPmac { FdAccess::Pmac } else { FdAccess::Csma };
            let out = establish_fd_network(medium, gateway, access, &fd_config(cfg))?;
            let mut freqs = LinkFreqs::new(cfg.control_freq);
            for lf in &out.report.link_freqs {
                freqs.set(lf.parent, lf.child, lf.down);
                freqs.set(lf.child, lf.parent, lf.up);
            }
            (out.report, out.medium, freqs)
        }
    };
    let establish_window = (SimTime::ZERO, SimTime::ZERO + report.total_time);
    let data_window = run_data_phase(&mut medium, &report, &freqs, cfg.timing().packet())?;
    let trace = medium.into_trace();
    let row = MetricsRow {
        protocol: cfg.protocol,
        node_count: cfg.node_count,
        networking_time_us: calibrated_time(cfg, &report),
        establish_util: utilization(&trace, establish_window)?,
        data_util: utilization(&trace, data_window)?,
        seed: cfg.seed,
    };
    Ok(ScenarioRun { row, report, trace, establish_window, data_window })
}

/// Runs `cfg` for every protocol and node count; rows come back in input
/// order regardless of scheduling.
pub fn sweep_nodes(cfg: &ScenarioConfig, protocols: &[Protocol], counts: &[usize]) -> Result<Vec<MetricsRow>, MetricsError> {
    use rayon::prelude::*;
    let jobs: Vec<ScenarioConfig> = protocols
        .iter()
        .flat_map(|&p| counts.iter().map(move |&n| ScenarioConfig { protocol: p, node_count: n, ..cfg.clone() }))
        .collect();
    jobs.par_iter().map(|c| run_scenario(c).map(|r| r.row)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mechanism: SweepMechanism,
    pub n_points: usize,
    pub comm_count: u32,
    pub formula_count: u64,
    pub complete: bool,
    pub best_up: Option<usize>,
    pub best_down: Option<usize>,
    pub duration_us: u64,
}

/// Sweeps the gateway's first link with `mech` for every frequency count
/// from 1 to `cfg.freq_points`.
pub fn sweep_frequencies(cfg: &ScenarioConfig, mech: SweepMechanism) -> Result<Vec<SweepRow>, MetricsError> {
    let mut rows = Vec::new();
    for n in 1..=cfg.freq_points {
        let c = ScenarioConfig {
            freq_points: n,
            control_freq: cfg.control_freq.min(n - 1),
            snr_entries: cfg.snr_entries.iter().copied().filter(|s| s.freq < n).collect(),
            beacon_plan: crate::fdplc::BeaconPlan::OwnDownlink,
            ..cfg.clone()
        };
        let mut medium = build_medium(&c)?;
        let upper = c.gateway();
        let lower = medium
            .channel()
            .topology
            .neighbors(upper)
            .next()
            .ok_or_else(|| ConfigError { line: None, message: "the gateway has no neighbor to sweep".into() })?;
        let scfg = SweepConfig { packet_us: c.packet_us, retune_us: c.retune_us };
        let r = run_sweep(&mut medium, mech, upper, lower, scfg)?;
        rows.push(SweepRow {
            mechanism: mech,
            n_points: n,
            comm_count: r.comm_count,
            formula_count: comm_count_formula(mech, n as u64)?,
            complete: r.complete,
            best_up: r.best_up,
            best_down: r.best_down,
            duration_us: r.duration.as_micros(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::scenario::TopologySpec;

    fn small(protocol: Protocol) -> ScenarioConfig {
        ScenarioConfig { protocol, node_count: 6, topology: TopologySpec::Tree, seed: 3, ..Default::default() }
    }

    #[test]
    fn all_protocols_join_everyone() {
        for p in Protocol::ALL {
            let run = run_scenario(&small(p)).unwrap();
            assert_eq!(run.report.joins.len(), 6, "{p}");
            assert!((0.0..=1.0).contains(&run.row.establish_util));
            assert!((0.0..=1.0).contains(&run.row.data_util));
            assert!(run.data_window.1 > run.data_window.0);
        }
    }

    #[test]
    fn preset_is_per_node_arithmetic() {
        let cfg = ScenarioConfig { calibration: Calibration::Fitted2021, ..small(Protocol::Pmac) };
        assert_eq!(run_scenario(&cfg).unwrap().row.networking_time_us, 6 * 80_000);
        let cfg = ScenarioConfig { calibration: Calibration::Fitted2021, ..small(Protocol::Csma) };
        assert_eq!(run_scenario(&cfg).unwrap().row.networking_time_us, 6 * 5_120_000);
    }

    #[test]
    fn rerun_is_identical() {
        let a = run_scenario(&small(Protocol::FdPmac)).unwrap();
        let b = run_scenario(&small(Protocol::FdPmac)).unwrap();
        assert_eq!(a.row, b.row);
        assert_eq!(a.trace.to_jsonl(), b.trace.to_jsonl());
    }

    #[test]
    fn frequency_sweep_rows() {
        let rows = sweep_frequencies(&small(Protocol::Pmac), SweepMechanism::FrequencyDivision).unwrap();
        assert_eq!(rows.len(), 8);
        for r in rows {
            assert!(r.complete);
            assert_eq!(r.comm_count as u64, r.formula_count);
        }
    }
}
