//! Abstract power-line channel.
//!
//! The physical layer is reduced to a topology graph, a per-link per-direction
//! per-frequency SNR table, and slot-level on/off collisions: any temporal
//! overlap of two same-frequency transmissions from in-range senders destroys
//! both at the shared receiver. There is no capture effect.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{RngStream, SimTime};
use crate::error::SimError;
use crate::frame::Frame;
use crate::ids::NodeId;

pub const DEFAULT_SNR_THRESHOLD_DB: f64 = 10.0;

/// Undirected graph of which nodes can hear each other at all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    adj: Vec<BTreeSet<NodeId>>,
}

impl Topology {
    /// `n` isolated nodes with ids `0..n`.
    pub fn new(n: usize) -> Self {
        Self { adj: vec![BTreeSet::new(); n] }
    }

    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self, SimError> {
        let mut t = Self::new(n);
        for &(a, b) in edges {
            t.add_link(NodeId(a), NodeId(b))?;
        }
        Ok(t)
    }

    pub fn chain(n: usize) -> Self {
        let mut t = Self::new(n);
        for i in 1..n {
            t.add_link(NodeId(i as u32 - 1), NodeId(i as u32)).unwrap();
        }
        t
    }

    /// Node 0 linked to every other node.
    pub fn star(n: usize) -> Self {
        let mut t = Self::new(n);
        for i in 1..n {
            t.add_link(NodeId(0), NodeId(i as u32)).unwrap();
        }
        t
    }

    /// Random recursive tree: node `i` attaches to a uniformly chosen earlier node.
    pub fn random_tree(n: usize, rng: &mut RngStream) -> Self {
        let mut t = Self::new(n);
        for i in 1..n {
            let parent = rng.draw_uniform(0, i as i64 - 1).unwrap() as u32;
            t.add_link(NodeId(parent), NodeId(i as u32)).unwrap();
        }
        t
    }

    /// Random tree plus `extra` random chords, so still connected.
    pub fn random_connected(n: usize, extra: usize, rng: &mut RngStream) -> Self {
        let mut t = Self::random_tree(n, rng);
        if n < 3 {
            return t;
        }
        let max_links = n * (n - 1) / 2;
        let mut added = 0;
        let mut tries = 0;
        while added < extra && t.link_count() < max_links && tries < extra * 50 + 100 {
            tries += 1;
            let a = rng.draw_uniform(0, n as i64 - 1).unwrap() as u32;
            let b = rng.draw_uniform(0, n as i64 - 1).unwrap() as u32;
            if a != b && !t.are_linked(NodeId(a), NodeId(b)) {
                t.add_link(NodeId(a), NodeId(b)).unwrap();
                added += 1;
            }
        }
        t
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId) -> Result<(), SimError> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Err(SimError::Contract(format!("self-link on {a}")));
        }
        self.adj[a.index()].insert(b);
        self.adj[b.index()].insert(a);
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.adj.len()).map(|i| NodeId(i as u32))
    }

    pub fn contains(&self, n: NodeId) -> bool {
        n.index() < self.adj.len()
    }

    fn check(&self, n: NodeId) -> Result<(), SimError> {
        if self.contains(n) {
            Ok(())
        } else {
            Err(SimError::UnknownNode(n))
        }
    }

    /// Neighbors in ascending id order.
    pub fn neighbors(&self, n: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adj[n.index()].iter().copied()
    }

    pub fn are_linked(&self, a: NodeId, b: NodeId) -> bool {
        self.contains(a) && self.adj[a.index()].contains(&b)
    }

    pub fn links(&self) -> Vec<Link> {
        let mut out = Vec::new();
        for (i, ns) in self.adj.iter().enumerate() {
            for &j in ns {
                if (i as u32) < j.0 {
                    out.push(Link::new(NodeId(i as u32), j));
                }
            }
        }
        out
    }

    pub fn link_count(&self) -> usize {
        self.adj.iter().map(|s| s.len()).sum::<usize>() / 2
    }

    /// Hop distance from `root` to every node; `None` when unreachable.
    pub fn hop_distances(&self, root: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.adj.len()];
        let mut queue = VecDeque::new();
        dist[root.index()] = Some(0);
        queue.push_back(root);
        while let Some(n) = queue.pop_front() {
            let d = dist[n.index()].unwrap();
            for m in self.neighbors(n) {
                if dist[m.index()].is_none() {
                    dist[m.index()] = Some(d + 1);
                    queue.push_back(m);
                }
            }
        }
        dist
    }

    /// Largest hop distance from `root` over reachable nodes.
    pub fn eccentricity(&self, root: NodeId) -> usize {
        self.hop_distances(root).into_iter().flatten().max().unwrap_or(0)
    }
}

/// Unordered node pair, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Link {
    pub lo: NodeId,
    pub hi: NodeId,
}

impl Link {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            Link { lo: a, hi: b }
        } else {
            Link { lo: b, hi: a }
        }
    }

    /// Direction of travel for a frame sent `from -> to` over this link.
    pub fn direction(from: NodeId, to: NodeId) -> Direction {
        if from < to {
            Direction::Down
        } else {
            Direction::Up
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo.0, self.hi.0)
    }
}

/// `Down` is travel from the lower node id to the higher one. Generated
/// scenarios put the gateway at id 0, so this matches gateway-outward traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

/// `N` equal sub-bands partitioning `[band_lo_hz, band_hi_hz]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyPlan {
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    centers: Vec<f64>,
}

impl Default for FrequencyPlan {
    fn default() -> Self {
        Self::equal_partition(8, 2.0e6, 12.0e6).unwrap()
    }
}

impl FrequencyPlan {
    pub fn equal_partition(n_points: usize, band_lo_hz: f64, band_hi_hz: f64) -> Result<Self, SimError> {
        if n_points == 0 || !(band_lo_hz < band_hi_hz) || !band_lo_hz.is_finite() || !band_hi_hz.is_finite() {
            return Err(SimError::Contract(format!(
                "bad frequency plan: {n_points} points over [{band_lo_hz}, {band_hi_hz}] Hz"
            )));
        }
        let width = (band_hi_hz - band_lo_hz) / n_points as f64;
        let centers = (0..n_points).map(|i| band_lo_hz + (i as f64 + 0.5) * width).collect();
        Ok(Self { band_lo_hz, band_hi_hz, centers })
    }

    pub fn n_points(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn check(&self, index: usize) -> Result<(), SimError> {
        if index < self.centers.len() {
            Ok(())
        } else {
            Err(SimError::UnknownFrequency { index, points: self.centers.len() })
        }
    }
}

/// SNR in dB for every (link, direction, frequency) of a scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnrTable {
    entries: BTreeMap<(Link, Direction, usize), f64>,
}

impl SnrTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Uniform draws in `[lo_db, hi_db)` for every entry. With `symmetric`,
    /// the uplink value mirrors the downlink one.
    pub fn generate(
        topology: &Topology,
        plan: &FrequencyPlan,
        rng: &mut RngStream,
        lo_db: f64,
        hi_db: f64,
        symmetric: bool,
    ) -> Result<Self, SimError> {
        let mut table = Self::new();
        for link in topology.links() {
            for f in 0..plan.n_points() {
                let down = rng.draw_real(lo_db, hi_db)?;
                let up = if symmetric { down } else { rng.draw_real(lo_db, hi_db)? };
                table.set(link, Direction::Down, f, down);
                table.set(link, Direction::Up, f, up);
            }
        }
        Ok(table)
    }

    /// Every entry set to `db`.
    pub fn uniform(topology: &Topology, plan: &FrequencyPlan, db: f64) -> Self {
        let mut table = Self::new();
        for link in topology.links() {
            for f in 0..plan.n_points() {
                table.set(link, Direction::Down, f, db);
                table.set(link, Direction::Up, f, db);
            }
        }
        table
    }

    pub fn set(&mut self, link: Link, dir: Direction, freq: usize, db: f64) {
        self.entries.insert((link, dir, freq), db);
    }

    /// Sets the entry for travel `from -> to`.
    pub fn set_directed(&mut self, from: NodeId, to: NodeId, freq: usize, db: f64) {
        self.set(Link::new(from, to), Link::direction(from, to), freq, db);
    }

    pub fn snr(&self, link: Link, dir: Direction, freq: usize) -> Result<f64, SimError> {
        self.entries.get(&(link, dir, freq)).copied().ok_or_else(|| {
            let (from, to) = match dir {
                Direction::Down => (link.lo, link.hi),
                Direction::Up => (link.hi, link.lo),
            };
            SimError::MissingSnr { from, to, freq }
        })
    }

    /// SNR of a frame travelling `from -> to`.
    pub fn directed(&self, from: NodeId, to: NodeId, freq: usize) -> Result<f64, SimError> {
        self.snr(Link::new(from, to), Link::direction(from, to), freq)
    }

    pub fn is_communicable(&self, link: Link, dir: Direction, freq: usize, threshold_db: f64) -> Result<bool, SimError> {
        Ok(self.snr(link, dir, freq)? >= threshold_db)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(Link, Direction, usize), &f64)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { entries: self.entries.iter().map(|(k, v)| (*k, v * factor)).collect() }
    }

    /// Checks that every (link, direction, frequency) has a finite entry.
    pub fn validate(&self, topology: &Topology, plan: &FrequencyPlan) -> Result<(), SimError> {
        for link in topology.links() {
            for f in 0..plan.n_points() {
                for dir in [Direction::Down, Direction::Up] {
                    let v = self.snr(link, dir, f)?;
                    if !v.is_finite() {
                        return Err(SimError::Contract(format!("non-finite SNR on {link} {} f{f}", dir.as_str())));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionAttempt {
    pub sender: NodeId,
    /// Intended receiver; `None` for broadcasts.
    pub dest: Option<NodeId>,
    pub frame: Frame,
    pub start: SimTime,
}

impl TransmissionAttempt {
    pub fn new(sender: NodeId, dest: Option<NodeId>, frame: Frame, start: SimTime) -> Self {
        Self { sender, dest, frame, start }
    }

    pub fn freq_index(&self) -> usize {
        self.frame.freq_index
    }

    pub fn duration(&self) -> SimTime {
        self.frame.duration
    }

    pub fn end(&self) -> SimTime {
        self.start + self.frame.duration
    }

    /// Half-open interval overlap.
    pub fn overlaps(&self, other: &TransmissionAttempt) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeliveryStatus {
    Delivered,
    Collided,
    BelowThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryOutcome {
    pub receiver: NodeId,
    pub status: DeliveryStatus,
    pub snr_db: f64,
}

/// Immutable channel model for one scenario.
#[derive(Debug, Clone)]
pub struct Channel {
    pub topology: Topology,
    pub plan: FrequencyPlan,
    pub snr: SnrTable,
    pub threshold_db: f64,
}

impl Channel {
    pub fn new(topology: Topology, plan: FrequencyPlan, snr: SnrTable, threshold_db: f64) -> Result<Self, SimError> {
        snr.validate(&topology, &plan)?;
        Ok(Self { topology, plan, snr, threshold_db })
    }

    pub fn snr(&self, link: Link, dir: Direction, freq: usize) -> Result<f64, SimError> {
        self.snr.snr(link, dir, freq)
    }

    pub fn is_communicable(&self, link: Link, dir: Direction, freq: usize, threshold_db: f64) -> Result<bool, SimError> {
        self.snr.is_communicable(link, dir, freq, threshold_db)
    }

    /// Whether a frame `from -> to` on `freq` clears the configured threshold.
    pub fn can_reach(&self, from: NodeId, to: NodeId, freq: usize) -> bool {
        self.topology.are_linked(from, to)
            && self.snr.directed(from, to, freq).map(|s| s >= self.threshold_db).unwrap_or(false)
    }

    /// Outcome at every neighbor of the sender, given the other attempts
    /// that share the air with it.
    pub fn transmit(
        &self,
        attempt: &TransmissionAttempt,
        others: &[&TransmissionAttempt],
    ) -> Result<Vec<DeliveryOutcome>, SimError> {
        if !self.topology.contains(attempt.sender) {
            return Err(SimError::UnknownNode(attempt.sender));
        }
        self.plan.check(attempt.freq_index())?;
        if attempt.duration() == SimTime::ZERO {
            return Err(SimError::Contract("transmission with zero duration".into()));
        }
        let f = attempt.freq_index();
        let mut out = Vec::new();
        for receiver in self.topology.neighbors(attempt.sender) {
            let snr_db = self.snr.directed(attempt.sender, receiver, f)?;
            let status = if snr_db < self.threshold_db {
                DeliveryStatus::BelowThreshold
            } else if others.iter().any(|o| {
                o.freq_index() == f
                    && o.sender != receiver
                    && self.topology.are_linked(o.sender, receiver)
                    && o.overlaps(attempt)
            }) {
                DeliveryStatus::Collided
            } else {
                DeliveryStatus::Delivered
            };
            out.push(DeliveryOutcome { receiver, status, snr_db });
        }
        Ok(out)
    }

    /// Outcomes for a batch of attempts sharing the air.
    pub fn resolve(&self, attempts: &[TransmissionAttempt]) -> Result<Vec<Vec<DeliveryOutcome>>, SimError> {
        attempts
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let others: Vec<&TransmissionAttempt> =
                    attempts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, o)| o).collect();
                self.transmit(a, &others)
            })
            .collect()
    }
}
