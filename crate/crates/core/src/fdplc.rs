//! Frequency-division PLC networking.
//!
//! The master node (MN) grows the network in cycles. Every node that joined in
//! an earlier cycle beacons, so each cycle admits the next hop ring. Before a
//! link is configured, its two ends run a frequency sweep and then operate the
//! downlink and uplink on their best frequencies. Access within a cycle uses
//! either the preamble-based handshakes or CSMA windows.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::TransmissionAttempt;
use crate::csma::{pick_beacon, run_contention, BackoffState, Contender, WindowOutcome};
use crate::engine::SimTime;
use crate::error::SimError;
use crate::frame::{Frame, FrameKind};
use crate::ids::{NodeId, Sid};
use crate::medium::{LinkFreqs, Medium, SlotTiming};
use crate::pmac::{PmacConfig, PmacNetwork};
use crate::report::{levels_from, EstablishReport, JoinRecord, LinkFrequency, Protocol};
use crate::sweep::{run_fd_sweep, SweepConfig, SweepMechanism, SweepResult};
use crate::trace::TraceEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FdRole {
    /// Master node (the gateway).
    Mn,
    /// Relay node.
    Rn,
    /// Leaf node.
    Ln,
    /// Not yet in the network.
    XLn,
}

impl FdRole {
    pub fn tag(self) -> &'static str {
        match self {
            FdRole::Mn => "MN",
            FdRole::Rn => "RN",
            FdRole::Ln => "LN",
            FdRole::XLn => "xLN",
        }
    }
}

impl fmt::Display for FdRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleEvent {
    /// The MN approved the node's association.
    Approved,
    /// A node was admitted through this one.
    GainedChild,
}

/// Legal role transitions; anything else is a contract violation.
pub fn promote(role: FdRole, event: RoleEvent) -> Result<FdRole, SimError> {
    match (role, event) {
        (FdRole::XLn, RoleEvent::Approved) => Ok(FdRole::Ln),
        (FdRole::Ln | FdRole::Rn, RoleEvent::GainedChild) => Ok(FdRole::Rn),
        (FdRole::Mn, RoleEvent::GainedChild) => Ok(FdRole::Mn),
        (r, e) => Err(SimError::Contract(format!("illegal role transition {r} on {e:?}"))),
    }
}

/// Short address assigned by the MN on approval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ShortAddress(pub u16);

impl From<Sid> for ShortAddress {
    fn from(s: Sid) -> Self {
        ShortAddress(s.0)
    }
}

/// Frequencies on which beacons (or PTE preambles) are sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BeaconPlan {
    /// Each node beacons on the downlink frequency of its own parent link;
    /// the MN uses the control frequency.
    #[default]
    OwnDownlink,
    CommonControl(usize),
    /// Simultaneous beacons on every frequency point.
    AllFrequencies,
}

impl fmt::Display for BeaconPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BeaconPlan::OwnDownlink => f.write_str("own-downlink"),
            BeaconPlan::CommonControl(i) => write!(f, "control:{i}"),
            BeaconPlan::AllFrequencies => f.write_str("all"),
        }
    }
}

impl FromStr for BeaconPlan {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "own-downlink" => Ok(BeaconPlan::OwnDownlink),
            "all" => Ok(BeaconPlan::AllFrequencies),
            _ => s
                .strip_prefix("control:")
                .and_then(|i| i.parse().ok())
                .map(BeaconPlan::CommonControl)
                .ok_or_else(|| format!("unknown beacon plan `{s}` (expected own-downlink, control:<idx> or all)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FdAccess {
    Pmac,
    Csma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdConfig {
    pub timing: SlotTiming,
    pub beacon_plan: BeaconPlan,
    pub control_freq: usize,
    pub sweep: SweepConfig,
    /// Settings for preamble-based access.
    pub pmac: PmacConfig,
    /// Safety bound on cycles and on CSMA windows per cycle.
    pub max_cycles: u32,
    pub max_windows: u32,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            timing: SlotTiming::default(),
            beacon_plan: BeaconPlan::default(),
            control_freq: 0,
            sweep: SweepConfig::default(),
            pmac: PmacConfig::default(),
            max_cycles: 1_000,
            max_windows: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleState {
    pub cycle: u32,
    pub beaconers: Vec<NodeId>,
    pub admitted: Vec<NodeId>,
    pub started: SimTime,
    pub ended: SimTime,
}

pub struct FdOutcome {
    pub report: EstablishReport,
    pub roles: BTreeMap<NodeId, FdRole>,
    pub addresses: BTreeMap<NodeId, ShortAddress>,
    pub cycles: Vec<CycleState>,
    pub sweeps: Vec<SweepResult>,
    /// The medium after establishment, for follow-on traffic.
    pub medium: Medium,
}

struct Roles {
    roles: Vec<FdRole>,
}

impl Roles {
    fn new(n: usize, mn: NodeId) -> Self {
        let mut roles = vec![FdRole::XLn; n];
        roles[mn.index()] = FdRole::Mn;
        Self { roles }
    }

    fn apply(&mut self, medium: &mut Medium, node: NodeId, ev: RoleEvent) -> Result<(), SimError> {
        let from = self.roles[node.index()];
        let to = promote(from, ev)?;
        if to != from {
            self.roles[node.index()] = to;
            medium.note(Some(node), TraceEvent::RoleChanged { from: from.tag().into(), to: to.tag().into() });
        }
        Ok(())
    }

    fn joined(&mut self, medium: &mut Medium, node: NodeId, parent: NodeId) -> Result<(), SimError> {
        self.apply(medium, node, RoleEvent::Approved)?;
        self.apply(medium, parent, RoleEvent::GainedChild)
    }
}

fn beacon_freqs(plan: BeaconPlan, node: NodeId, mn: NodeId, control: usize, parent: Option<NodeId>, freqs: &LinkFreqs, n: usize) -> Vec<usize> {
    match plan {
        BeaconPlan::AllFrequencies => (0..n).collect(),
        BeaconPlan::CommonControl(i) => vec![i],
        BeaconPlan::OwnDownlink => match parent {
            Some(p) if node != mn => vec![freqs.get(p, node)],
            _ => vec![control],
        },
    }
}

/// Builds a frequency-division network rooted at `mn`.
pub fn establish_fd_network(medium: Medium, mn: NodeId, access: FdAccess, cfg: &FdConfig) -> Result<FdOutcome, SimError> {
    let n = medium.channel().plan.n_points();
    medium.channel().plan.check(cfg.control_freq)?;
    if let BeaconPlan::CommonControl(i) = cfg.beacon_plan {
        medium.channel().plan.check(i)?;
    }
    match access {
        FdAccess::Pmac => establish_fd_pmac(medium, mn, cfg, n),
        FdAccess::Csma => establish_fd_csma(medium, mn, cfg, n),
    }
}

fn establish_fd_pmac(medium: Medium, mn: NodeId, cfg: &FdConfig, n: usize) -> Result<FdOutcome, SimError> {
    let pcfg = PmacConfig { timing: cfg.timing, freq_index: cfg.control_freq, ..cfg.pmac.clone() };
    let mut net = PmacNetwork::new(medium, mn, pcfg)?;
    net.enable_sweep(SweepMechanism::FrequencyDivision, cfg.sweep);
    let mut roles = Roles::new(net.nodes().len(), mn);
    let started = net.now();
    let mut cycles = Vec::new();
    let mut beaconers = vec![mn];
    loop {
        let cycle = cycles.len() as u32 + 1;
        let t0 = net.now();
        net.medium_mut().note(Some(mn), TraceEvent::Phase { name: format!("cycle-{cycle}") });
        for &b in &beaconers {
            let parent = net.node(b).parent_route;
            let f = beacon_freqs(cfg.beacon_plan, b, mn, cfg.control_freq, parent, net.link_freqs(), n);
            net.set_discovery_freqs(b, f);
        }
        let first = net.joins().len();
        let admitted = net.establish_pass(&beaconers)?;
        let new_joins: Vec<JoinRecord> = net.joins()[first..].to_vec();
        for j in &new_joins {
            roles.joined(net.medium_mut(), j.node, j.parent)?;
        }
        cycles.push(CycleState { cycle, beaconers: beaconers.clone(), admitted: admitted.clone(), started: t0, ended: net.now() });
        if admitted.is_empty() || cycle >= cfg.max_cycles {
            break;
        }
        beaconers.extend(admitted);
    }
    let report = net.report(Protocol::FdPmac, started, 0, cycles.len() as u32);
    let sweeps = net.sweeps().to_vec();
    Ok(outcome(report, roles, cycles, sweeps, net.into_medium()))
}

fn outcome(report: EstablishReport, roles: Roles, cycles: Vec<CycleState>, sweeps: Vec<SweepResult>, medium: Medium) -> FdOutcome {
    let addresses = report.joins.iter().map(|j| (j.node, ShortAddress::from(j.sid))).collect();
    let roles = roles
        .roles
        .iter()
        .enumerate()
        .map(|(i, r)| (NodeId(i as u32), *r))
        .collect();
    FdOutcome { report, roles, addresses, cycles, sweeps, medium }
}

struct FdCsma<'a> {
    medium: Medium,
    cfg: &'a FdConfig,
    mn: NodeId,
    n: usize,
    roles: Roles,
    parent: Vec<Option<NodeId>>,
    level: Vec<u32>,
    freqs: LinkFreqs,
    joined: Vec<bool>,
    next_sid: u16,
    joins: Vec<JoinRecord>,
    sweeps: Vec<SweepResult>,
    link_freqs: Vec<LinkFrequency>,
}

impl FdCsma<'_> {
    fn path_to(&self, node: NodeId) -> Vec<NodeId> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent[cur.index()] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Beacon phase; returns, per xLN, the best beacon (sender, freq, snr)
    /// heard from each beaconer.
    fn beacon_phase(&mut self, beaconers: &[NodeId]) -> Result<BTreeMap<NodeId, Vec<(NodeId, usize, f64)>>, SimError> {
        let packet = self.cfg.timing.packet();
        let mut heard: BTreeMap<NodeId, Vec<(NodeId, usize, f64)>> = BTreeMap::new();
        for &b in beaconers {
            let fs = beacon_freqs(self.cfg.beacon_plan, b, self.mn, self.cfg.control_freq, self.parent[b.index()], &self.freqs, self.n);
            let now = self.medium.now();
            let attempts = fs
                .iter()
                .map(|&f| TransmissionAttempt::new(b, None, Frame::new(FrameKind::Beacon, packet, f), now))
                .collect();
            for r in self.medium.exchange(attempts)? {
                let f = r.attempt.freq_index();
                for o in r.delivered() {
                    if self.joined[o.receiver.index()] {
                        continue;
                    }
                    let list = heard.entry(o.receiver).or_default();
                    match list.iter_mut().find(|e| e.0 == b) {
                        Some(e) if o.snr_db > e.2 || (o.snr_db == e.2 && f < e.1) => *e = (b, f, o.snr_db),
                        Some(_) => {}
                        None => list.push((b, f, o.snr_db)),
                    }
                }
            }
        }
        Ok(heard)
    }

    /// Sweep, approval through the MN and association reply for a granted
    /// request. Returns whether the node joined.
    fn associate(&mut self, node: NodeId, target: NodeId) -> Result<bool, SimError> {
        let packet = self.cfg.timing.packet();
        let sweep = run_fd_sweep(&mut self.medium, target, node, self.cfg.sweep)?;
        let picked = sweep.best_up.zip(sweep.best_down);
        self.sweeps.push(sweep);
        let Some((up, down)) = picked else { return Ok(false) };
        let up_path: Vec<NodeId> = self.path_to(target).into_iter().rev().collect();
        if self.medium.send_path(&up_path, &FrameKind::ApprovalRequest { candidate: node }, packet, &self.freqs)?.is_none() {
            return Ok(false);
        }
        let down_path: Vec<NodeId> = up_path.iter().rev().copied().collect();
        if self.medium.send_path(&down_path, &FrameKind::ApprovalReply { candidate: node }, packet, &self.freqs)?.is_none() {
            return Ok(false);
        }
        let r = self.medium.send(target, Some(node), FrameKind::AssocReply, packet, down)?;
        if r.delivered_to(node).is_none() {
            return Ok(false);
        }
        self.freqs.set(target, node, down);
        self.freqs.set(node, target, up);
        let sid = Sid(self.next_sid);
        self.next_sid += 1;
        let level = self.level[target.index()] + 1;
        self.parent[node.index()] = Some(target);
        self.level[node.index()] = level;
        self.joined[node.index()] = true;
        let at = self.medium.now();
        self.joins.push(JoinRecord { node, sid, level, parent: target, at });
        self.link_freqs.push(LinkFrequency { parent: target, child: node, up, down });
        self.medium.note(Some(node), TraceEvent::Joined { sid, level, parent: target });
        self.roles.joined(&mut self.medium, node, target)?;
        Ok(true)
    }

    fn cycle(&mut self, beaconers: &[NodeId]) -> Result<Vec<NodeId>, SimError> {
        let timing = self.cfg.timing;
        let heard = self.beacon_phase(beaconers)?;
        let mut admitted = Vec::new();
        let mut refused: Vec<(NodeId, NodeId)> = Vec::new();
        for _ in 0..self.cfg.max_windows {
            let window_start = self.medium.now();
            let mut contenders = Vec::new();
            for (node, list) in &heard {
                if self.joined[node.index()] {
                    continue;
                }
                let options: Vec<(NodeId, f64)> =
                    list.iter().filter(|e| !refused.contains(&(*node, e.0))).map(|e| (e.0, e.2)).collect();
                let Some((target, _)) = pick_beacon(&options) else { continue };
                let freq = list.iter().find(|e| e.0 == target).map(|e| e.1).unwrap_or(self.cfg.control_freq);
                let slot = BackoffState::new(timing.window_slots)?.contend(self.medium.rng(*node))?;
                contenders.push(Contender { sender: *node, dest: target, slot, freq, frame: FrameKind::AssocRequest { target } });
            }
            let window_end = window_start + SimTime::from_micros(timing.window_slots as u64 * timing.data_slot_us);
            let progress = match run_contention(&mut self.medium, window_start, &timing, &contenders)? {
                WindowOutcome::Granted { sender: node, dest: target, .. } => {
                    if self.associate(node, target)? {
                        admitted.push(node);
                    } else {
                        refused.push((node, target));
                    }
                    true
                }
                WindowOutcome::Idle { collided } => collided,
            };
            if self.medium.now() < window_end {
                self.medium.advance_to(window_end)?;
            }
            if !progress {
                break;
            }
        }
        Ok(admitted)
    }
}

fn establish_fd_csma(medium: Medium, mn: NodeId, cfg: &FdConfig, n: usize) -> Result<FdOutcome, SimError> {
    cfg.timing.validate()?;
    let count = medium.channel().topology.node_count();
    if !medium.channel().topology.contains(mn) {
        return Err(SimError::UnknownNode(mn));
    }
    let mut joined = vec![false; count];
    joined[mn.index()] = true;
    let mut st = FdCsma {
        freqs: LinkFreqs::new(cfg.control_freq),
        medium,
        cfg,
        mn,
        n,
        roles: Roles::new(count, mn),
        parent: vec![None; count],
        level: vec![0; count],
        joined,
        next_sid: 1,
        joins: Vec::new(),
        sweeps: Vec::new(),
        link_freqs: Vec::new(),
    };
    let started = st.medium.now();
    let mut cycles = Vec::new();
    let mut beaconers = vec![mn];
    loop {
        let cycle = cycles.len() as u32 + 1;
        let t0 = st.medium.now();
        st.medium.note(Some(mn), TraceEvent::Phase { name: format!("cycle-{cycle}") });
        let admitted = st.cycle(&beaconers)?;
        cycles.push(CycleState { cycle, beaconers: beaconers.clone(), admitted: admitted.clone(), started: t0, ended: st.medium.now() });
        if admitted.is_empty() || cycle >= cfg.max_cycles {
            break;
        }
        beaconers.extend(admitted);
    }
    let report = EstablishReport {
        protocol: Protocol::FdCsma,
        root: mn,
        levels: levels_from(&st.joins),
        joins: st.joins.clone(),
        unjoined: (0..count).filter(|&i| !st.joined[i]).map(|i| NodeId(i as u32)).collect(),
        rounds: cycles.len() as u32,
        total_time: st.medium.now() - started,
        link_freqs: st.link_freqs.clone(),
        trace: st.medium.trace().clone(),
    };
    Ok(outcome(report, st.roles, cycles, st.sweeps, st.medium))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Channel, FrequencyPlan, SnrTable, Topology};
    use crate::engine::RngStream;

    fn medium(topo: Topology, seed: u64) -> Medium {
        let plan = FrequencyPlan::default();
        let mut rng = RngStream::new(seed, 1 << 32);
        let table = SnrTable::generate(&topo, &plan, &mut rng, 12.0, 36.0, false).unwrap();
        Medium::new(Channel::new(topo, plan, table, 10.0).unwrap(), seed)
    }

    #[test]
    fn role_transitions() {
        assert_eq!(promote(FdRole::XLn, RoleEvent::Approved).unwrap(), FdRole::Ln);
        assert_eq!(promote(FdRole::Ln, RoleEvent::GainedChild).unwrap(), FdRole::Rn);
        assert_eq!(promote(FdRole::Rn, RoleEvent::GainedChild).unwrap(), FdRole::Rn);
        assert_eq!(promote(FdRole::Mn, RoleEvent::GainedChild).unwrap(), FdRole::Mn);
        assert!(promote(FdRole::Ln, RoleEvent::Approved).is_err());
        assert!(promote(FdRole::XLn, RoleEvent::GainedChild).is_err());
        assert!(promote(FdRole::Mn, RoleEvent::Approved).is_err());
    }

    #[test]
    fn beacon_plan_parse() {
        assert_eq!("own-downlink".parse::<BeaconPlan>().unwrap(), BeaconPlan::OwnDownlink);
        assert_eq!("control:3".parse::<BeaconPlan>().unwrap(), BeaconPlan::CommonControl(3));
        assert_eq!("all".parse::<BeaconPlan>().unwrap(), BeaconPlan::AllFrequencies);
        assert!("control:x".parse::<BeaconPlan>().is_err());
        for p in [BeaconPlan::OwnDownlink, BeaconPlan::CommonControl(2), BeaconPlan::AllFrequencies] {
            assert_eq!(p.to_string().parse::<BeaconPlan>().unwrap(), p);
        }
    }

    #[test]
    fn chain_cycles_bounded() {
        for access in [FdAccess::Pmac, FdAccess::Csma] {
            let topo = Topology::chain(4);
            let ecc = topo.eccentricity(NodeId(0));
            let out = establish_fd_network(medium(topo, 5), NodeId(0), access, &FdConfig::default()).unwrap();
            assert_eq!(out.report.joins.len(), 3, "{access:?}");
            assert!(out.cycles.len() <= ecc + 1);
            assert_eq!(out.roles[&NodeId(0)], FdRole::Mn);
            assert_eq!(out.roles[&NodeId(1)], FdRole::Rn);
            assert_eq!(out.roles[&NodeId(3)], FdRole::Ln);
            assert_eq!(out.report.link_freqs.len(), 3);
        }
    }

    #[test]
    fn links_use_swept_best() {
        let out = establish_fd_network(medium(Topology::star(4), 2), NodeId(0), FdAccess::Pmac, &FdConfig::default()).unwrap();
        for lf in &out.report.link_freqs {
            let s = out.sweeps.iter().rev().find(|s| s.lower == lf.child && s.complete).unwrap();
            assert_eq!((s.best_up, s.best_down), (Some(lf.up), Some(lf.down)));
        }
        assert_eq!(out.addresses.len(), 3);
    }
}
