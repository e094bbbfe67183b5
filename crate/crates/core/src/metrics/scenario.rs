//! Scenario files: one `key = value` per line, `#` starts a comment.
//!
//! `node_count` counts the nodes besides the gateway, which is always node 0.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::channel::{Channel, FrequencyPlan, SnrTable, Topology, DEFAULT_SNR_THRESHOLD_DB};
use crate::engine::RngStream;
use crate::error::SimError;
use crate::fdplc::BeaconPlan;
use crate::ids::NodeId;
use crate::medium::{SlotTiming, DEFAULT_PACKET_US, DEFAULT_PREAMBLE_SLOT_US, DEFAULT_WINDOW_SLOTS};
use crate::pmac::{AccessMode, DEFAULT_HEARTBEAT_US};
use crate::report::Protocol;
use crate::sweep::SweepMechanism;

/// RNG stream ids for scenario generation, far above any node id.
const TOPOLOGY_STREAM: u64 = 1 << 40;
const SNR_STREAM: u64 = (1 << 40) + 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), message: message.into() }
    }

    fn general(message: impl Into<String>) -> Self {
        Self { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Calibration {
    /// Times come straight from the slot-accurate simulation.
    Physical,
    /// Fixed per-node establishment costs fitted to published totals.
    Fitted2021,
}

impl Calibration {
    pub fn tag(self) -> &'static str {
        match self {
            Calibration::Physical => "physical",
            Calibration::Fitted2021 => "paper-2021",
        }
    }
}

impl FromStr for Calibration {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "physical" => Ok(Calibration::Physical),
            "paper-2021" => Ok(Calibration::Fitted2021),
            _ => Err(format!("unknown calibration `{s}` (valid: physical, paper-2021)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologySpec {
    Chain,
    Star,
    /// Random recursive tree.
    Tree,
    /// Random tree plus `extra_links` chords.
    Random,
    Edges(Vec<(u32, u32)>),
}

impl TopologySpec {
    fn tag(&self) -> &'static str {
        match self {
            TopologySpec::Chain => "chain",
            TopologySpec::Star => "star",
            TopologySpec::Tree => "tree",
            TopologySpec::Random => "random",
            TopologySpec::Edges(_) => "edges",
        }
    }
}

/// A directed SNR override: `snr = <from> <to> <freq> <dB>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrEntry {
    pub from: u32,
    pub to: u32,
    pub freq: usize,
    pub db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub protocol: Protocol,
    pub node_count: usize,
    pub topology: TopologySpec,
    pub extra_links: usize,
    pub preamble_slot_us: u64,
    pub contention_window: u32,
    pub data_slot_us: u64,
    pub packet_us: u64,
    pub freq_points: usize,
    pub band_lo_mhz: f64,
    pub band_hi_mhz: f64,
    pub snr_lo_db: f64,
    pub snr_hi_db: f64,
    pub snr_symmetric: bool,
    pub snr_threshold_db: f64,
    pub snr_entries: Vec<SnrEntry>,
    pub calibration: Calibration,
    pub heartbeat_us: u64,
    pub access_mode: AccessMode,
    pub max_pte_rounds: u32,
    pub beacon_plan: BeaconPlan,
    pub control_freq: usize,
    pub sweep_mechanism: SweepMechanism,
    pub retune_us: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            protocol: Protocol::Pmac,
            node_count: 64,
            topology: TopologySpec::Star,
            extra_links: 0,
            preamble_slot_us: DEFAULT_PREAMBLE_SLOT_US,
            contention_window: DEFAULT_WINDOW_SLOTS,
            data_slot_us: DEFAULT_PACKET_US,
            packet_us: DEFAULT_PACKET_US,
            freq_points: 8,
            band_lo_mhz: 2.0,
            band_hi_mhz: 12.0,
            snr_lo_db: 12.0,
            snr_hi_db: 36.0,
            snr_symmetric: false,
            snr_threshold_db: DEFAULT_SNR_THRESHOLD_DB,
            snr_entries: Vec::new(),
            calibration: Calibration::Physical,
            heartbeat_us: DEFAULT_HEARTBEAT_US,
            access_mode: AccessMode::Fair,
            max_pte_rounds: 16,
            beacon_plan: BeaconPlan::OwnDownlink,
            control_freq: 0,
            sweep_mechanism: SweepMechanism::FrequencyDivision,
            retune_us: 0,
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| ConfigError::at(line, format!("bad value for `{key}`: {e}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::at(line, format!("bad value for `{key}`: expected true or false"))),
    }
}

fn parse_edges(line: usize, v: &str) -> Result<Vec<(u32, u32)>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|e| {
            let (a, b) = e.split_once('-').ok_or_else(|| ConfigError::at(line, format!("bad edge `{e}`: expected a-b")))?;
            Ok((parse_value(line, "edges", a.trim())?, parse_value(line, "edges", b.trim())?))
        })
        .collect()
}

fn parse_snr(line: usize, v: &str) -> Result<SnrEntry, ConfigError> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    let [from, to, freq, db] = parts[..] else {
        return Err(ConfigError::at(line, "bad value for `snr`: expected `<from> <to> <freq> <dB>`"));
    };
    Ok(SnrEntry {
        from: parse_value(line, "snr", from)?,
        to: parse_value(line, "snr", to)?,
        freq: parse_value(line, "snr", freq)?,
        db: parse_value(line, "snr", db)?,
    })
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let mut edges: Option<Vec<(u32, u32)>> = None;
        let mut topology_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, got `{body}`")))?;
            match key {
                "seed" => cfg.seed = parse_value(line, key, value)?,
                "protocol" => cfg.protocol = parse_value(line, key, value)?,
                "node_count" => cfg.node_count = parse_value(line, key, value)?,
                "topology" => {
                    topology_line = line;
                    cfg.topology = match value {
                        "chain" => TopologySpec::Chain,
                        "star" => TopologySpec::Star,
                        "tree" => TopologySpec::Tree,
                        "random" => TopologySpec::Random,
                        "edges" => TopologySpec::Edges(Vec::new()),
                        _ => {
                            return Err(ConfigError::at(
                                line,
                                format!("unknown topology `{value}` (valid: chain, star, tree, random, edges)"),
                            ))
                        }
                    }
                }
                "edges" => edges = Some(parse_edges(line, value)?),
                "extra_links" => cfg.extra_links = parse_value(line, key, value)?,
                "preamble_slot_us" => cfg.preamble_slot_us = parse_value(line, key, value)?,
                "contention_window" => cfg.contention_window = parse_value(line, key, value)?,
                "data_slot_us" => cfg.data_slot_us = parse_value(line, key, value)?,
                "packet_us" => cfg.packet_us = parse_value(line, key, value)?,
                "freq_points" => cfg.freq_points = parse_value(line, key, value)?,
                "band_lo_mhz" => cfg.band_lo_mhz = parse_value(line, key, value)?,
                "band_hi_mhz" => cfg.band_hi_mhz = parse_value(line, key, value)?,
                "snr_lo_db" => cfg.snr_lo_db = parse_value(line, key, value)?,
                "snr_hi_db" => cfg.snr_hi_db = parse_value(line, key, value)?,
                "snr_symmetric" => cfg.snr_symmetric = parse_bool(line, key, value)?,
                "snr_threshold_db" => cfg.snr_threshold_db = parse_value(line, key, value)?,
                "snr" => cfg.snr_entries.push(parse_snr(line, value)?),
                "calibration" => cfg.calibration = parse_value(line, key, value)?,
                "heartbeat_us" => cfg.heartbeat_us = parse_value(line, key, value)?,
                "access_mode" => cfg.access_mode = parse_value(line, key, value)?,
                "max_pte_rounds" => cfg.max_pte_rounds = parse_value(line, key, value)?,
                "beacon_plan" => cfg.beacon_plan = parse_value(line, key, value)?,
                "control_freq" => cfg.control_freq = parse_value(line, key, value)?,
                "sweep_mechanism" => cfg.sweep_mechanism = parse_value(line, key, value)?,
                "retune_us" => cfg.retune_us = parse_value(line, key, value)?,
                _ => return Err(ConfigError::at(line, format!("unknown key `{key}`"))),
            }
        }
        match (&mut cfg.topology, edges) {
            (TopologySpec::Edges(list), Some(e)) => *list = e,
            (TopologySpec::Edges(_), None) => {
                return Err(ConfigError::at(topology_line, "topology = edges needs an `edges` line"))
            }
            (_, Some(_)) => return Err(ConfigError::general("`edges` given but topology is not `edges`")),
            _ => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::general(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: &str| Err(ConfigError::general(m.to_string()));
        if self.node_count < 2 {
            return err("node_count must be at least 2");
        }
        if self.preamble_slot_us == 0 || self.data_slot_us == 0 || self.packet_us == 0 || self.heartbeat_us == 0 {
            return err("durations must be positive");
        }
        if self.contention_window == 0 {
            return err("contention_window must be positive");
        }
        if self.packet_us > self.data_slot_us {
            return err("packet_us must not exceed data_slot_us");
        }
        if self.data_slot_us < self.preamble_slot_us {
            return err("data_slot_us must be at least preamble_slot_us");
        }
        if self.freq_points == 0 {
            return err("freq_points must be positive");
        }
        if !(self.band_lo_mhz.is_finite() && self.band_hi_mhz.is_finite() && self.band_lo_mhz < self.band_hi_mhz) {
            return err("band_lo_mhz must be below band_hi_mhz");
        }
        if !(self.snr_lo_db.is_finite() && self.snr_hi_db.is_finite() && self.snr_lo_db <= self.snr_hi_db) {
            return err("snr_lo_db must not exceed snr_hi_db");
        }
        if !self.snr_threshold_db.is_finite() {
            return err("snr_threshold_db must be finite");
        }
        if self.control_freq >= self.freq_points {
            return err("control_freq must be below freq_points");
        }
        if let BeaconPlan::CommonControl(i) = self.beacon_plan {
            if i >= self.freq_points {
                return err("beacon_plan control frequency must be below freq_points");
            }
        }
        if self.max_pte_rounds == 0 {
            return err("max_pte_rounds must be positive");
        }
        let vertices = self.node_count as u32 + 1;
        if let TopologySpec::Edges(e) = &self.topology {
            if e.iter().any(|&(a, b)| a >= vertices || b >= vertices || a == b) {
                return err("edges must join distinct nodes in 0..=node_count");
            }
        }
        for s in &self.snr_entries {
            if s.from >= vertices || s.to >= vertices || s.freq >= self.freq_points || !s.db.is_finite() {
                return err("snr entry refers to an unknown node or frequency");
            }
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` gives back the same config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("seed", self.seed.to_string());
        put("protocol", self.protocol.tag().into());
        put("node_count", self.node_count.to_string());
        put("topology", self.topology.tag().into());
        if let TopologySpec::Edges(e) = &self.topology {
            put("edges", e.iter().map(|(a, b)| format!("{a}-{b}")).collect::<Vec<_>>().join(","));
        }
        put("extra_links", self.extra_links.to_string());
        put("preamble_slot_us", self.preamble_slot_us.to_string());
        put("contention_window", self.contention_window.to_string());
        put("data_slot_us", self.data_slot_us.to_string());
        put("packet_us", self.packet_us.to_string());
        put("freq_points", self.freq_points.to_string());
        put("band_lo_mhz", format!("{:?}", self.band_lo_mhz));
        put("band_hi_mhz", format!("{:?}", self.band_hi_mhz));
        put("snr_lo_db", format!("{:?}", self.snr_lo_db));
        put("snr_hi_db", format!("{:?}", self.snr_hi_db));
        put("snr_symmetric", self.snr_symmetric.to_string());
        put("snr_threshold_db", format!("{:?}", self.snr_threshold_db));
        for s in &self.snr_entries {
            put("snr", format!("{} {} {} {:?}", s.from, s.to, s.freq, s.db));
        }
        put("calibration", self.calibration.tag().into());
        put("heartbeat_us", self.heartbeat_us.to_string());
        put("access_mode", self.access_mode.tag().into());
        put("max_pte_rounds", self.max_pte_rounds.to_string());
        put("beacon_plan", self.beacon_plan.to_string());
        put("control_freq", self.control_freq.to_string());
        put("sweep_mechanism", self.sweep_mechanism.tag().into());
        put("retune_us", self.retune_us.to_string());
        out
    }

    pub fn timing(&self) -> SlotTiming {
        SlotTiming {
            preamble_slot_us: self.preamble_slot_us,
            packet_us: self.packet_us,
            data_slot_us: self.data_slot_us,
            window_slots: self.contention_window,
        }
    }

    pub fn gateway(&self) -> NodeId {
        NodeId(0)
    }

    pub fn build_topology(&self) -> Result<Topology, SimError> {
        let n = self.node_count + 1;
        let mut rng = RngStream::new(self.seed, TOPOLOGY_STREAM);
        Ok(match &self.topology {
            TopologySpec::Chain => Topology::chain(n),
            TopologySpec::Star => Topology::star(n),
            TopologySpec::Tree => Topology::random_tree(n, &mut rng),
            TopologySpec::Random => Topology::random_connected(n, self.extra_links, &mut rng),
            TopologySpec::Edges(e) => Topology::from_edges(n, e)?,
        })
    }

    pub fn frequency_plan(&self) -> Result<FrequencyPlan, SimError> {
        FrequencyPlan::equal_partition(self.freq_points, self.band_lo_mhz * 1e6, self.band_hi_mhz * 1e6)
    }

    pub fn build_channel(&self) -> Result<Channel, SimError> {
        let topo = self.build_topology()?;
        let plan = self.frequency_plan()?;
        let mut rng = RngStream::new(self.seed, SNR_STREAM);
        let mut table = SnrTable::generate(&topo, &plan, &mut rng, self.snr_lo_db, self.snr_hi_db, self.snr_symmetric)?;
        for s in &self.snr_entries {
            let (a, b) = (NodeId(s.from), NodeId(s.to));
            if !topo.are_linked(a, b) {
                return Err(SimError::NoLink(a, b));
            }
            table.set_directed(a, b, s.freq, s.db);
        }
        Channel::new(topo, plan, table, self.snr_threshold_db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = ScenarioConfig::parse("node_count = 2\nprotocol = pmac\n").unwrap();
        assert_eq!(cfg.node_count, 2);
        assert_eq!(cfg.preamble_slot_us, 220);
        assert_eq!(cfg.contention_window, 256);
        assert_eq!(cfg.data_slot_us, 10_445);
        assert_eq!(cfg.heartbeat_us, 10_000_000);
        assert_eq!(cfg.calibration, Calibration::Physical);
    }

    #[test]
    fn zero_slot_rejected() {
        assert!(ScenarioConfig::parse("node_count = 2\npreamble_slot_us = 0\n").is_err());
    }

    #[test]
    fn unknown_protocol_names_valid_tags() {
        let e = ScenarioConfig::parse("# header\nprotocol = aloha\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        for tag in ["pmac", "csma", "fd-pmac", "fd-csma"] {
            assert!(e.message.contains(tag), "{e}");
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = ScenarioConfig::parse("seed = 1\n\nbogus\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = ScenarioConfig::parse("seed = 1\ncolour = red\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.to_string().starts_with("line 2:"));
    }

    #[test]
    fn too_few_nodes() {
        assert!(ScenarioConfig::parse("node_count = 1\n").is_err());
    }

    #[test]
    fn edges_and_snr_round_trip() {
        let text = "node_count = 4\ntopology = edges\nedges = 0-1, 0-2, 1-3, 2-3, 1-4\nsnr = 3 1 0 30.5\nbeacon_plan = control:2\n";
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.topology, TopologySpec::Edges(vec![(0, 1), (0, 2), (1, 3), (2, 3), (1, 4)]));
        let back = ScenarioConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        let ch = cfg.build_channel().unwrap();
        assert_eq!(ch.snr.directed(NodeId(3), NodeId(1), 0).unwrap(), 30.5);
    }

    #[test]
    fn edges_without_list() {
        assert!(ScenarioConfig::parse("topology = edges\n").is_err());
        assert!(ScenarioConfig::parse("node_count = 3\ntopology = edges\nedges = 0-9\n").is_err());
    }

    #[test]
    fn generated_channel_deterministic() {
        let cfg = ScenarioConfig { topology: TopologySpec::Random, extra_links: 5, node_count: 20, ..Default::default() };
        let a = cfg.build_channel().unwrap();
        let b = cfg.build_channel().unwrap();
        assert_eq!(a.topology.links(), b.topology.links());
        assert_eq!(a.snr, b.snr);
    }
}
