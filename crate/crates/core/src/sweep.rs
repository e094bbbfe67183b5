//! Frequency sweeping between an upper (initiating) node and a lower node.
//!
//! Three mechanisms are modelled, each as real transmissions on the medium so
//! that the trace carries every communication:
//!
//! * traditional N×N: `N` rounds; in round `i` the lower listens on `i` only
//!   while the upper polls every frequency, then the lower replies once on `i`.
//! * traditional incomplete: triangular schedule, round `i` probes downlinks
//!   `0..=i` asking for a reply on uplink `i`; stops at the first workable pair.
//! * frequency division: the lower can receive on any frequency, so `N`
//!   probes, `N` replies and one confirmation carrying the chosen pair.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::SimError;
use crate::frame::FrameKind;
use crate::ids::NodeId;
use crate::medium::Medium;
use crate::trace::TraceEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SweepMechanism {
    #[serde(rename = "nxn")]
    TraditionalNxN,
    #[serde(rename = "incomplete")]
    TraditionalIncomplete,
    #[serde(rename = "fd")]
    FrequencyDivision,
}

impl SweepMechanism {
    pub const ALL: [SweepMechanism; 3] =
        [SweepMechanism::TraditionalNxN, SweepMechanism::TraditionalIncomplete, SweepMechanism::FrequencyDivision];

    pub fn tag(self) -> &'static str {
        match self {
            SweepMechanism::TraditionalNxN => "nxn",
            SweepMechanism::TraditionalIncomplete => "incomplete",
            SweepMechanism::FrequencyDivision => "fd",
        }
    }
}

impl fmt::Display for SweepMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SweepMechanism {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nxn" => Ok(SweepMechanism::TraditionalNxN),
            "incomplete" => Ok(SweepMechanism::TraditionalIncomplete),
            "fd" => Ok(SweepMechanism::FrequencyDivision),
            other => Err(format!("unknown sweep mechanism `{other}` (expected fd, nxn or incomplete)")),
        }
    }
}

/// Communications needed by each mechanism for `n` frequency points. The
/// incomplete mechanism's value is its worst case.
pub fn comm_count_formula(mech: SweepMechanism, n: u64) -> Result<u64, SimError> {
    if n < 1 {
        return Err(SimError::Contract("sweep needs at least one frequency point".into()));
    }
    Ok(match mech {
        SweepMechanism::TraditionalNxN => n * n + n,
        SweepMechanism::TraditionalIncomplete => n * (n + 1) / 2 + 2,
        SweepMechanism::FrequencyDivision => 2 * n + 1,
    })
}

/// Argmax over populated entries, lowest index on ties.
pub fn best_frequency(records: &[Option<f64>]) -> Result<usize, SimError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in records.iter().enumerate() {
        if let Some(v) = *r {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| SimError::Contract("best_frequency over an empty record table".into()))
}

/// SNR measured per frequency in each direction. `None` means nothing was
/// received there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrRecordTable {
    pub uplink: Vec<Option<f64>>,
    pub downlink: Vec<Option<f64>>,
}

impl SnrRecordTable {
    pub fn new(n: usize) -> Self {
        Self { uplink: vec![None; n], downlink: vec![None; n] }
    }

    pub fn is_full(&self) -> bool {
        self.uplink.iter().chain(&self.downlink).all(Option::is_some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub mechanism: SweepMechanism,
    pub upper: NodeId,
    pub lower: NodeId,
    pub best_up: Option<usize>,
    pub best_down: Option<usize>,
    pub comm_count: u32,
    pub complete: bool,
    pub records: SnrRecordTable,
    pub duration: SimTime,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Air time of each sweep communication.
    pub packet_us: u64,
    /// Front-end reconfiguration delay for single-channel (traditional) radios.
    pub retune_us: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { packet_us: crate::medium::DEFAULT_PACKET_US, retune_us: 0 }
    }
}

struct Sweeper<'a> {
    medium: &'a mut Medium,
    cfg: SweepConfig,
    upper: NodeId,
    lower: NodeId,
    count: u32,
    upper_tuned: Option<usize>,
}

impl Sweeper<'_> {
    /// Sends one sweep frame; returns the SNR at the other end if delivered.
    fn send(&mut self, from_upper: bool, kind: FrameKind, freq: usize, retune: bool) -> Result<Option<f64>, SimError> {
        if retune && self.cfg.retune_us > 0 && self.upper_tuned != Some(freq) {
            self.medium.idle(SimTime::from_micros(self.cfg.retune_us))?;
        }
        if from_upper {
            self.upper_tuned = Some(freq);
        }
        let (from, to) = if from_upper { (self.upper, self.lower) } else { (self.lower, self.upper) };
        self.count += 1;
        let r = self.medium.send(from, Some(to), kind, SimTime::from_micros(self.cfg.packet_us), freq)?;
        Ok(r.delivered_to(to))
    }
}

fn check_link(medium: &Medium, upper: NodeId, lower: NodeId) -> Result<usize, SimError> {
    if !medium.channel().topology.are_linked(upper, lower) {
        return Err(SimError::NoLink(upper, lower));
    }
    Ok(medium.channel().plan.n_points())
}

fn finish(
    medium: &mut Medium,
    mechanism: SweepMechanism,
    upper: NodeId,
    lower: NodeId,
    started: SimTime,
    count: u32,
    records: SnrRecordTable,
    picked: Option<(usize, usize)>,
) -> SweepResult {
    let complete = picked.is_some();
    let diagnostic = if complete {
        None
    } else if records.downlink.iter().all(Option::is_none) {
        Some("no downlink frequency reached the lower node".to_string())
    } else if records.uplink.iter().all(Option::is_none) {
        Some("no uplink frequency reached the upper node".to_string())
    } else {
        Some("no workable uplink/downlink pair found".to_string())
    };
    let result = SweepResult {
        mechanism,
        upper,
        lower,
        best_up: picked.map(|p| p.0),
        best_down: picked.map(|p| p.1),
        comm_count: count,
        complete,
        records,
        duration: medium.now() - started,
        diagnostic,
    };
    medium.note(
        Some(upper),
        TraceEvent::SweepDone {
            lower,
            mechanism: mechanism.tag().to_string(),
            best_up: result.best_up,
            best_down: result.best_down,
            comm_count: count,
        },
    );
    result
}

/// Frequency-division sweep: `2N+1` communications when the link is usable.
pub fn run_fd_sweep(medium: &mut Medium, upper: NodeId, lower: NodeId, cfg: SweepConfig) -> Result<SweepResult, SimError> {
    let n = check_link(medium, upper, lower)?;
    let started = medium.now();
    let mut records = SnrRecordTable::new(n);
    let mut s = Sweeper { medium, cfg, upper, lower, count: 0, upper_tuned: None };
    for f in 0..n {
        records.downlink[f] = s.send(true, FrameKind::SweepProbe { round: 0 }, f, false)?;
    }
    // The lower answers on every frequency once it has detected the sweep.
    if records.downlink.iter().any(Option::is_some) {
        for f in 0..n {
            records.uplink[f] = s.send(false, FrameKind::SweepReply { round: 0 }, f, false)?;
        }
    }
    let mut picked = None;
    if records.downlink.iter().any(Option::is_some) && records.uplink.iter().any(Option::is_some) {
        let up = best_frequency(&records.uplink)?;
        let down = best_frequency(&records.downlink)?;
        s.send(true, FrameKind::SweepConfirm { up, down }, down, false)?;
        picked = Some((up, down));
    }
    let count = s.count;
    Ok(finish(medium, SweepMechanism::FrequencyDivision, upper, lower, started, count, records, picked))
}

/// Traditional N×N sweep: `N²+N` communications when the link is usable.
pub fn run_traditional_sweep(
    medium: &mut Medium,
    upper: NodeId,
    lower: NodeId,
    cfg: SweepConfig,
) -> Result<SweepResult, SimError> {
    let n = check_link(medium, upper, lower)?;
    let started = medium.now();
    let mut records = SnrRecordTable::new(n);
    let mut s = Sweeper { medium, cfg, upper, lower, count: 0, upper_tuned: None };
    let mut detected = false;
    for round in 0..n {
        if cfg.retune_us > 0 {
            // Lower retunes its single front end to this round's frequency.
            s.medium.idle(SimTime::from_micros(cfg.retune_us))?;
        }
        for f in 0..n {
            let heard = s.send(true, FrameKind::SweepProbe { round: round as u32 }, f, true)?;
            if f == round {
                if let Some(snr) = heard {
                    records.downlink[round] = Some(snr);
                    detected = true;
                }
            }
        }
        if detected {
            records.uplink[round] = s.send(false, FrameKind::SweepReply { round: round as u32 }, round, false)?;
        }
    }
    let picked = match (best_frequency(&records.uplink), best_frequency(&records.downlink)) {
        (Ok(up), Ok(down)) => Some((up, down)),
        _ => None,
    };
    let count = s.count;
    Ok(finish(medium, SweepMechanism::TraditionalNxN, upper, lower, started, count, records, picked))
}

/// Incomplete sweep: stops at the first pair workable in both directions at
/// `threshold_db`. The chosen pair is first-found, not best.
pub fn run_incomplete_sweep(
    medium: &mut Medium,
    upper: NodeId,
    lower: NodeId,
    cfg: SweepConfig,
    threshold_db: f64,
) -> Result<SweepResult, SimError> {
    let n = check_link(medium, upper, lower)?;
    let started = medium.now();
    let mut records = SnrRecordTable::new(n);
    let mut s = Sweeper { medium, cfg, upper, lower, count: 0, upper_tuned: None };
    let mut picked = None;
    'rounds: for round in 0..n {
        let mut replied = false;
        for down in 0..=round {
            let heard = s.send(true, FrameKind::SweepProbe { round: round as u32 }, down, true)?;
            let Some(snr) = heard else { continue };
            records.downlink[down] = Some(snr);
            if snr < threshold_db || replied {
                // A second probe in the same round tells the lower its reply was lost.
                continue;
            }
            replied = true;
            let back = s.send(false, FrameKind::SweepReply { round: round as u32 }, round, false)?;
            if let Some(up_snr) = back {
                records.uplink[round] = Some(up_snr);
                if up_snr >= threshold_db {
                    s.send(true, FrameKind::SweepConfirm { up: round, down }, down, true)?;
                    picked = Some((round, down));
                    break 'rounds;
                }
            }
        }
    }
    let count = s.count;
    Ok(finish(medium, SweepMechanism::TraditionalIncomplete, upper, lower, started, count, records, picked))
}

pub fn run_sweep(
    medium: &mut Medium,
    mech: SweepMechanism,
    upper: NodeId,
    lower: NodeId,
    cfg: SweepConfig,
) -> Result<SweepResult, SimError> {
    match mech {
        SweepMechanism::FrequencyDivision => run_fd_sweep(medium, upper, lower, cfg),
        SweepMechanism::TraditionalNxN => run_traditional_sweep(medium, upper, lower, cfg),
        SweepMechanism::TraditionalIncomplete => {
            let thr = medium.channel().threshold_db;
            run_incomplete_sweep(medium, upper, lower, cfg, thr)
        }
    }
}
