//! Preamble-based MAC: network establishment and maintenance driven by the
//! gateway.
//!
//! A level is built in three steps. The PTE round (preamble time exchange)
//! lets each unjoined neighbor of the initiator answer a broadcast preamble in
//! a randomly drawn contention slot; the slot offset becomes a time difference
//! (ΔT) known at both ends. A T-Query per ΔT then identifies the responder by
//! MAC or SID, and a Net-Config binds its SID and network id. Deeper levels
//! repeat the same steps through P-beacons: the gateway asks a joined relay to
//! run the PTE and relays every later handshake through it.

pub mod preamble;
pub mod state;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::TransmissionAttempt;
use crate::engine::SimTime;
use crate::error::SimError;
use crate::frame::{Frame, FrameKind, Identity, PreambleMode};
use crate::ids::{NodeId, NwkId, Sid};
use crate::medium::{LinkFreqs, Medium, SlotTiming};
use crate::report::{levels_from, EstablishReport, JoinRecord, LinkFrequency, Protocol};
use crate::sweep::{run_sweep, SweepConfig, SweepMechanism, SweepResult};
use crate::trace::TraceEvent;

use self::preamble::encode_preamble;
pub use self::state::{BindingTable, DeltaT, NodeState};

/// Default survival period granted by a Net-Config: 10 s.
pub const DEFAULT_HEARTBEAT_US: u64 = 10_000_000;

/// When Net-Config runs relative to the T-Query handshakes of a level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessMode {
    /// All PTE and T-Query handshakes of the level first, then every Net-Config.
    Fair,
    /// Net-Config right after each successful T-Query.
    Fast,
}

impl AccessMode {
    pub fn tag(self) -> &'static str {
        match self {
            AccessMode::Fair => "fair",
            AccessMode::Fast => "fast",
        }
    }
}

impl fmt::Display for AccessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AccessMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fair" => Ok(AccessMode::Fair),
            "fast" => Ok(AccessMode::Fast),
            other => Err(format!("unknown access mode `{other}` (expected fair or fast)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmacConfig {
    pub timing: SlotTiming,
    pub mode: AccessMode,
    pub heartbeat_us: u64,
    pub nwkid: NwkId,
    /// Upper bound on PTE rounds per initiator in one pass.
    pub max_pte_rounds: u32,
    /// Operating frequency for single-frequency networks.
    pub freq_index: usize,
}

impl Default for PmacConfig {
    fn default() -> Self {
        Self {
            timing: SlotTiming::default(),
            mode: AccessMode::Fair,
            heartbeat_us: DEFAULT_HEARTBEAT_US,
            nwkid: NwkId(1),
            max_pte_rounds: 16,
            freq_index: 0,
        }
    }
}

/// One reply preamble received by a PTE initiator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PteRecord {
    pub dt: DeltaT,
    pub freq: usize,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PteOutcome {
    pub initiator: NodeId,
    pub records: Vec<PteRecord>,
    /// The initiator sensed reply energy, decoded or collided.
    pub activity: bool,
    pub started: SimTime,
    pub ended: SimTime,
}

impl PteOutcome {
    pub fn delta_ts(&self) -> Vec<DeltaT> {
        self.records.iter().map(|r| r.dt).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PBeaconOutcome {
    pub records: Vec<PteRecord>,
    pub activity: bool,
    pub timeout: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TQueryOutcome {
    Reply { node: NodeId, id: Identity, quality_db: f64 },
    NoReply,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetConfigOutcome {
    Confirmed,
    Timeout,
}

/// A route to a target through `relay`, with the channel quality measured
/// during its T-Query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub relay: NodeId,
    pub quality_db: f64,
    pub id: Identity,
}

/// Highest quality wins; ties go to the smallest relay id.
pub fn select_route(candidates: &[(NodeId, f64)]) -> Result<(NodeId, f64), SimError> {
    candidates
        .iter()
        .copied()
        .reduce(|best, c| if c.1 > best.1 || (c.1 == best.1 && c.0 < best.0) { c } else { best })
        .ok_or_else(|| SimError::Contract("select_route with no candidates".into()))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaintenanceReport {
    pub kept_alive: Vec<NodeId>,
    pub rejoined: Vec<NodeId>,
    pub newly_joined: Vec<NodeId>,
    pub lost: Vec<NodeId>,
    pub started: SimTime,
    pub ended: SimTime,
}

#[derive(Debug, Default)]
struct Discovery {
    order: Vec<NodeId>,
    candidates: BTreeMap<NodeId, Vec<Candidate>>,
    admitted: Vec<NodeId>,
}

pub struct PmacNetwork {
    medium: Medium,
    cfg: PmacConfig,
    gateway: NodeId,
    nodes: Vec<NodeState>,
    bindings: BindingTable,
    /// The gateway's access list: hop path to every admitted node.
    routes: BTreeMap<NodeId, Vec<NodeId>>,
    freqs: LinkFreqs,
    discovery_freqs: BTreeMap<NodeId, Vec<usize>>,
    /// (responder, initiator) pairs already identified in the current pass.
    acks: BTreeSet<(NodeId, NodeId)>,
    joins: Vec<JoinRecord>,
    sweep: Option<(SweepMechanism, SweepConfig)>,
    sweeps: Vec<SweepResult>,
}

impl PmacNetwork {
    pub fn new(medium: Medium, gateway: NodeId, cfg: PmacConfig) -> Result<Self, SimError> {
        cfg.timing.validate()?;
        let topo = &medium.channel().topology;
        if !topo.contains(gateway) {
            return Err(SimError::UnknownNode(gateway));
        }
        medium.channel().plan.check(cfg.freq_index)?;
        let mut nodes: Vec<NodeState> = topo.nodes().map(NodeState::new).collect();
        let gw = &mut nodes[gateway.index()];
        gw.joined = true;
        gw.sid = Some(Sid(0));
        gw.nwkid = Some(cfg.nwkid);
        let freqs = LinkFreqs::new(cfg.freq_index);
        Ok(Self {
            medium,
            cfg,
            gateway,
            nodes,
            bindings: BindingTable::new(),
            routes: BTreeMap::new(),
            freqs,
            discovery_freqs: BTreeMap::new(),
            acks: BTreeSet::new(),
            joins: Vec::new(),
            sweep: None,
            sweeps: Vec::new(),
        })
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn medium_mut(&mut self) -> &mut Medium {
        &mut self.medium
    }

    pub fn into_medium(self) -> Medium {
        self.medium
    }

    pub fn config(&self) -> &PmacConfig {
        &self.cfg
    }

    pub fn gateway(&self) -> NodeId {
        self.gateway
    }

    pub fn now(&self) -> SimTime {
        self.medium.now()
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn bindings(&self) -> &BindingTable {
        &self.bindings
    }

    pub fn routes(&self) -> &BTreeMap<NodeId, Vec<NodeId>> {
        &self.routes
    }

    pub fn joins(&self) -> &[JoinRecord] {
        &self.joins
    }

    pub fn link_freqs(&self) -> &LinkFreqs {
        &self.freqs
    }

    pub fn sweeps(&self) -> &[SweepResult] {
        &self.sweeps
    }

    /// Run a sweep on every newly selected parent/child link before Net-Config
    /// and operate the link on the chosen frequencies.
    pub fn enable_sweep(&mut self, mech: SweepMechanism, cfg: SweepConfig) {
        self.sweep = Some((mech, cfg));
    }

    /// Frequencies on which `node` broadcasts its PTE preamble.
    pub fn set_discovery_freqs(&mut self, node: NodeId, freqs: Vec<usize>) {
        self.discovery_freqs.insert(node, freqs);
    }

    fn discovery_freqs_of(&self, node: NodeId) -> Vec<usize> {
        self.discovery_freqs.get(&node).cloned().unwrap_or_else(|| vec![self.cfg.freq_index])
    }

    fn packet(&self) -> SimTime {
        self.cfg.timing.packet()
    }

    fn path_to(&self, node: NodeId) -> Vec<NodeId> {
        if node == self.gateway {
            vec![self.gateway]
        } else {
            self.routes.get(&node).cloned().unwrap_or_else(|| vec![self.gateway, node])
        }
    }

    /// Intermediate hops of a route must still be in the network to forward.
    fn path_usable(&self, path: &[NodeId]) -> bool {
        path.iter().skip(1).take(path.len().saturating_sub(2)).all(|n| self.nodes[n.index()].joined)
    }

    fn send_along(&mut self, path: &[NodeId], kind: FrameKind) -> Result<Option<f64>, SimError> {
        if !self.path_usable(path) {
            return Ok(None);
        }
        let packet = self.packet();
        self.medium.send_path(path, &kind, packet, &self.freqs)
    }

    fn send_back(&mut self, path: &[NodeId], kind: FrameKind) -> Result<Option<f64>, SimError> {
        let rev: Vec<NodeId> = path.iter().rev().copied().collect();
        self.send_along(&rev, kind)
    }

    fn timeout(&mut self) -> Result<(), SimError> {
        let p = self.packet();
        self.medium.idle(p)
    }

    /// One PTE round at `initiator`: broadcast, `window_slots` reply slots.
    pub fn run_pte(&mut self, initiator: NodeId) -> Result<PteOutcome, SimError> {
        if !self.nodes[initiator.index()].joined {
            return Err(SimError::Contract(format!("PTE initiator {initiator} is not in the network")));
        }
        let timing = self.cfg.timing;
        let slot = timing.preamble_slot();
        let started = self.medium.now();
        self.medium.note(Some(initiator), TraceEvent::Phase { name: "pte-start".into() });

        let pattern = encode_preamble(PreambleMode::Pte);
        let preamble = FrameKind::Preamble { mode: PreambleMode::Pte, slots: pattern.slots };
        let broadcasts: Vec<TransmissionAttempt> = self
            .discovery_freqs_of(initiator)
            .into_iter()
            .map(|f| TransmissionAttempt::new(initiator, None, Frame::new(preamble.clone(), slot, f), started))
            .collect();
        let heard = self.medium.exchange(broadcasts)?;

        // Best heard frequency per listener.
        let mut best: BTreeMap<NodeId, (usize, f64)> = BTreeMap::new();
        for r in &heard {
            for o in r.delivered() {
                let f = r.attempt.freq_index();
                let e = best.entry(o.receiver).or_insert((f, o.snr_db));
                if o.snr_db > e.1 || (o.snr_db == e.1 && f < e.0) {
                    *e = (f, o.snr_db);
                }
            }
        }

        let reply_base = started + slot;
        let mut replies = Vec::new();
        for (&n, &(f, _)) in &best {
            let st = &self.nodes[n.index()];
            if n == self.gateway || st.joined || self.acks.contains(&(n, initiator)) {
                continue;
            }
            let slot_idx = self.medium.rng(n).draw_uniform(0, timing.window_slots as i64 - 1)? as u64;
            let dt = DeltaT::from_slot(slot_idx, timing.preamble_slot_us);
            let st = &mut self.nodes[n.index()];
            st.stored_dt = Some(dt);
            st.dt_peer = Some((initiator, f));
            self.medium.note(Some(n), TraceEvent::DtStored { initiator, dt_us: dt.micros(), freq: f });
            let start = reply_base + SimTime::from_micros(dt.micros());
            replies.push(TransmissionAttempt::new(n, Some(initiator), Frame::new(preamble.clone(), slot, f), start));
        }
        let results = self.medium.exchange(replies)?;

        let mut records = Vec::new();
        let mut activity = false;
        for r in &results {
            match r.status_at(initiator) {
                Some(crate::channel::DeliveryStatus::Delivered) => {
                    activity = true;
                    let snr_db = r.delivered_to(initiator).unwrap_or(f64::NAN);
                    let dt = DeltaT((r.attempt.start - reply_base).as_micros());
                    records.push(PteRecord { dt, freq: r.attempt.freq_index(), snr_db });
                }
                Some(crate::channel::DeliveryStatus::Collided) => activity = true,
                _ => {}
            }
        }
        records.sort_by_key(|r| (r.dt, r.freq));
        let ended = started + timing.pte_round();
        self.medium.advance_to(ended)?;
        self.medium.note(Some(initiator), TraceEvent::Phase { name: "pte-end".into() });
        Ok(PteOutcome { initiator, records, activity, started, ended })
    }

    /// Identifies the node holding `rec.dt` among the neighbors of `relay`.
    pub fn run_tquery(&mut self, relay: NodeId, rec: PteRecord) -> Result<TQueryOutcome, SimError> {
        let path = self.path_to(relay);
        let query = FrameKind::TQuery { dt_us: rec.dt.micros() };
        if path.len() > 1 && self.send_along(&path, query.clone())?.is_none() {
            self.timeout()?;
            return Ok(TQueryOutcome::NoReply);
        }
        let packet = self.packet();
        let q = self.medium.send(relay, None, query, packet, rec.freq)?;
        let matching: Vec<NodeId> = q
            .delivered()
            .map(|o| o.receiver)
            .filter(|n| {
                let st = &self.nodes[n.index()];
                st.stored_dt == Some(rec.dt) && st.dt_peer == Some((relay, rec.freq))
            })
            .collect();
        if matching.is_empty() {
            self.timeout()?;
            return Ok(TQueryOutcome::NoReply);
        }
        let now = self.medium.now();
        let replies: Vec<TransmissionAttempt> = matching
            .iter()
            .map(|&n| {
                let st = &self.nodes[n.index()];
                let id = st.sid.map(Identity::Sid).unwrap_or(Identity::Mac(st.mac));
                TransmissionAttempt::new(n, Some(relay), Frame::new(FrameKind::TQueryReply { id }, packet, rec.freq), now)
            })
            .collect();
        let results = self.medium.exchange(replies)?;
        let Some((node, id, quality_db)) = results.iter().find_map(|r| {
            let q = r.delivered_to(relay)?;
            match &r.attempt.frame.kind {
                FrameKind::TQueryReply { id } => Some((r.attempt.sender, *id, q)),
                _ => None,
            }
        }) else {
            return Ok(TQueryOutcome::NoReply);
        };
        if path.len() > 1 && self.send_back(&path, FrameKind::TQueryReply { id })?.is_none() {
            self.timeout()?;
            return Ok(TQueryOutcome::NoReply);
        }
        self.acks.insert((node, relay));
        Ok(TQueryOutcome::Reply { node, id, quality_db })
    }

    /// Binds `sid` at `target` over `path` (gateway first, target last). For a
    /// node already in the network this is a keep-alive.
    pub fn run_netconfig(&mut self, target: NodeId, sid: Sid, path: &[NodeId]) -> Result<NetConfigOutcome, SimError> {
        if path.first() != Some(&self.gateway) || path.last() != Some(&target) {
            return Err(SimError::Contract(format!("Net-Config path must run gateway -> {target}")));
        }
        if let Some(mac) = self.bindings.mac_of(sid) {
            if mac != self.nodes[target.index()].mac {
                return Err(SimError::Contract(format!("{sid} is bound to another MAC")));
            }
        }
        let st = &self.nodes[target.index()];
        let frame = FrameKind::NetConfig {
            mac: if st.sid.is_none() { Some(st.mac) } else { None },
            sid,
            nwkid: self.cfg.nwkid,
            heartbeat_us: self.cfg.heartbeat_us,
        };
        if self.send_along(path, frame)?.is_none() {
            self.timeout()?;
            return Ok(NetConfigOutcome::Timeout);
        }
        let deadline = self.medium.now() + SimTime::from_micros(self.cfg.heartbeat_us);
        let st = &mut self.nodes[target.index()];
        st.sid = Some(sid);
        st.nwkid = Some(self.cfg.nwkid);
        st.joined = true;
        st.survival_deadline = Some(deadline);
        if self.send_back(path, FrameKind::NetConfigConfirm { sid })?.is_none() {
            self.timeout()?;
            return Ok(NetConfigOutcome::Timeout);
        }
        Ok(NetConfigOutcome::Confirmed)
    }

    /// Has `relay` run PTE rounds on the gateway's behalf and report the
    /// resulting time differences back.
    pub fn run_pbeacon(&mut self, relay: NodeId) -> Result<PBeaconOutcome, SimError> {
        if relay == self.gateway {
            let out = self.run_pte(relay)?;
            return Ok(PBeaconOutcome { records: out.records, activity: out.activity, timeout: false });
        }
        if !self.nodes[relay.index()].joined {
            return Err(SimError::Contract(format!("P-beacon relay {relay} is not in the network")));
        }
        let path = self.path_to(relay);
        if self.send_along(&path, FrameKind::PBeacon { relay })?.is_none() {
            self.timeout()?;
            return Ok(PBeaconOutcome { records: Vec::new(), activity: false, timeout: true });
        }
        let out = self.run_pte(relay)?;
        let report = FrameKind::PteReport { records: out.records.len() as u32 };
        if self.send_back(&path, report)?.is_none() {
            self.timeout()?;
            return Ok(PBeaconOutcome { records: Vec::new(), activity: false, timeout: true });
        }
        Ok(PBeaconOutcome { records: out.records, activity: out.activity, timeout: false })
    }

    fn clear_dts(&mut self) {
        let mut any = false;
        for st in &mut self.nodes {
            any |= st.stored_dt.is_some();
            st.clear_dt();
        }
        if any {
            self.medium.note(None, TraceEvent::DtCleared);
        }
    }

    /// PTE and T-Query through each initiator in turn. With `admit_now`,
    /// Net-Config follows each successful T-Query.
    fn discover(&mut self, initiators: &[NodeId], admit_now: bool) -> Result<Discovery, SimError> {
        self.acks.clear();
        let mut d = Discovery::default();
        for &relay in initiators {
            if !self.nodes[relay.index()].joined {
                continue;
            }
            let mut rounds = 0;
            loop {
                rounds += 1;
                let out = self.run_pbeacon(relay)?;
                for rec in &out.records {
                    if let TQueryOutcome::Reply { node, id, quality_db } = self.run_tquery(relay, *rec)? {
                        let c = Candidate { relay, quality_db, id };
                        let list = d.candidates.entry(node).or_default();
                        if list.is_empty() {
                            d.order.push(node);
                        }
                        list.push(c);
                        if admit_now && !self.nodes[node.index()].joined && self.admit(node, &[c])? {
                            d.admitted.push(node);
                        }
                    }
                }
                self.clear_dts();
                if !out.activity || out.timeout || rounds >= self.cfg.max_pte_rounds {
                    break;
                }
            }
        }
        Ok(d)
    }

    /// Route selection, optional sweep, then Net-Config.
    fn admit(&mut self, node: NodeId, candidates: &[Candidate]) -> Result<bool, SimError> {
        let pairs: Vec<(NodeId, f64)> = candidates
            .iter()
            .filter(|c| self.nodes[c.relay.index()].joined)
            .map(|c| (c.relay, c.quality_db))
            .collect();
        if pairs.is_empty() {
            return Ok(false);
        }
        let (relay, quality_db) = select_route(&pairs)?;
        self.medium.note(Some(node), TraceEvent::RouteSelected { via: relay, quality_db });
        if let Some((mech, scfg)) = self.sweep {
            let r = run_sweep(&mut self.medium, mech, relay, node, scfg)?;
            let picked = r.best_up.zip(r.best_down);
            self.sweeps.push(r);
            let Some((up, down)) = picked else { return Ok(false) };
            self.freqs.set(relay, node, down);
            self.freqs.set(node, relay, up);
        }
        let mut path = self.path_to(relay);
        path.push(node);
        let sid = self.bindings.bind(self.nodes[node.index()].mac)?;
        if self.run_netconfig(node, sid, &path)? != NetConfigOutcome::Confirmed {
            return Ok(false);
        }
        let level = self.nodes[relay.index()].level + 1;
        let st = &mut self.nodes[node.index()];
        st.parent_route = Some(relay);
        st.level = level;
        self.routes.insert(node, path);
        let at = self.medium.now();
        self.joins.push(JoinRecord { node, sid, level, parent: relay, at });
        self.medium.note(Some(node), TraceEvent::Joined { sid, level, parent: relay });
        Ok(true)
    }

    /// One establishment pass through `initiators`; returns nodes admitted.
    pub fn establish_pass(&mut self, initiators: &[NodeId]) -> Result<Vec<NodeId>, SimError> {
        let fast = self.cfg.mode == AccessMode::Fast;
        let d = self.discover(initiators, fast)?;
        let mut admitted = d.admitted;
        if !fast {
            for node in d.order {
                if !self.nodes[node.index()].joined && self.admit(node, &d.candidates[&node])? {
                    admitted.push(node);
                }
            }
        }
        Ok(admitted)
    }

    /// Level-by-level establishment from the gateway until a pass admits
    /// nobody.
    pub fn establish_network(&mut self) -> Result<EstablishReport, SimError> {
        let started = self.medium.now();
        let first_join = self.joins.len();
        let mut initiators = vec![self.gateway];
        let mut passes = 0;
        loop {
            passes += 1;
            self.medium.note(Some(self.gateway), TraceEvent::Phase { name: format!("level-{passes}") });
            let admitted = self.establish_pass(&initiators)?;
            if admitted.is_empty() {
                break;
            }
            initiators = admitted;
        }
        Ok(self.report(Protocol::Pmac, started, first_join, passes))
    }

    pub(crate) fn report(&self, protocol: Protocol, started: SimTime, first_join: usize, rounds: u32) -> EstablishReport {
        let joins = self.joins[first_join..].to_vec();
        let unjoined = self.nodes.iter().filter(|n| !n.joined).map(|n| n.id).collect();
        let link_freqs = joins
            .iter()
            .filter_map(|j| {
                let down = self.freqs.explicit(j.parent, j.node)?;
                let up = self.freqs.explicit(j.node, j.parent)?;
                Some(LinkFrequency { parent: j.parent, child: j.node, up, down })
            })
            .collect();
        EstablishReport {
            protocol,
            root: self.gateway,
            levels: levels_from(&joins),
            joins,
            unjoined,
            rounds,
            total_time: self.medium.now() - started,
            link_freqs,
            trace: self.medium.trace().clone(),
        }
    }

    /// Nodes whose survival period ran out leave the network, keeping their SID.
    pub fn expire_lapsed(&mut self) -> Vec<NodeId> {
        let now = self.medium.now();
        let mut lapsed = Vec::new();
        for i in 0..self.nodes.len() {
            let st = &self.nodes[i];
            if st.id != self.gateway && st.joined && st.survival_deadline.is_some_and(|d| d < now) {
                lapsed.push(st.id);
            }
        }
        for &n in &lapsed {
            self.lapse_node(n);
        }
        lapsed
    }

    fn lapse_node(&mut self, n: NodeId) {
        let st = &mut self.nodes[n.index()];
        st.lapse();
        let sid = st.sid;
        self.medium.note(Some(n), TraceEvent::Lapsed { sid });
    }

    /// Makes `node` miss its heartbeat and leave the network now.
    pub fn force_lapse(&mut self, node: NodeId) -> Result<(), SimError> {
        if node == self.gateway || !self.medium.channel().topology.contains(node) {
            return Err(SimError::Contract(format!("cannot lapse {node}")));
        }
        let now = self.medium.now();
        self.nodes[node.index()].survival_deadline = Some(now);
        if self.nodes[node.index()].joined {
            self.lapse_node(node);
        }
        Ok(())
    }

    /// Idles for `d`, then expires lapsed nodes.
    pub fn advance(&mut self, d: SimTime) -> Result<Vec<NodeId>, SimError> {
        self.medium.idle(d)?;
        Ok(self.expire_lapsed())
    }

    /// Level-by-level maintenance: PTE picks up lapsed nodes (joined ones stay
    /// silent), keep-alive Net-Configs extend the others, and lapsed nodes are
    /// re-admitted under their retained SID on the best route.
    pub fn maintain_network(&mut self) -> Result<MaintenanceReport, SimError> {
        let started = self.medium.now();
        self.expire_lapsed();
        let listed: Vec<(NodeId, usize)> = {
            let mut v: Vec<(NodeId, usize)> = self.routes.iter().map(|(n, p)| (*n, p.len() - 1)).collect();
            v.sort_by_key(|(n, _)| self.nodes[n.index()].sid);
            v
        };
        let mut report = MaintenanceReport { started, ..Default::default() };
        let mut timed_out: BTreeSet<NodeId> = BTreeSet::new();
        let mut initiators = vec![self.gateway];
        let mut level = 1usize;
        while !initiators.is_empty() {
            self.medium.note(Some(self.gateway), TraceEvent::Phase { name: format!("maintain-level-{level}") });
            let d = self.discover(&initiators, false)?;
            for &(node, lvl) in &listed {
                if lvl != level || d.candidates.contains_key(&node) {
                    continue;
                }
                let Some(sid) = self.nodes[node.index()].sid else { continue };
                let was_joined = self.nodes[node.index()].joined;
                let path = self.routes[&node].clone();
                match self.run_netconfig(node, sid, &path)? {
                    NetConfigOutcome::Confirmed => {
                        let deadline = self.nodes[node.index()].survival_deadline.unwrap_or(started);
                        self.medium.note(Some(node), TraceEvent::KeptAlive { sid, deadline_us: deadline.as_micros() });
                        if was_joined {
                            report.kept_alive.push(node);
                        } else {
                            let parent = path[path.len() - 2];
                            let lvl = self.nodes[parent.index()].level + 1;
                            let st = &mut self.nodes[node.index()];
                            st.parent_route = Some(parent);
                            st.level = lvl;
                            report.rejoined.push(node);
                        }
                    }
                    NetConfigOutcome::Timeout => {
                        timed_out.insert(node);
                    }
                }
            }
            for node in d.order {
                if self.nodes[node.index()].joined {
                    continue;
                }
                let known = self.routes.contains_key(&node);
                if self.admit(node, &d.candidates[&node])? {
                    if known {
                        report.rejoined.push(node);
                    } else {
                        report.newly_joined.push(node);
                    }
                }
            }
            let mut next: Vec<NodeId> = self
                .nodes
                .iter()
                .filter(|n| n.joined && n.id != self.gateway && n.level as usize == level)
                .map(|n| n.id)
                .collect();
            next.sort_by_key(|n| self.nodes[n.index()].sid);
            initiators = next;
            level += 1;
        }
        for &(node, _) in &listed {
            let st = &self.nodes[node.index()];
            let rejoined = report.rejoined.contains(&node);
            if !rejoined && (timed_out.contains(&node) || !st.joined) {
                report.lost.push(node);
                self.medium.note(Some(node), TraceEvent::Lost);
            }
        }
        report.ended = self.medium.now();
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Channel, FrequencyPlan, SnrTable, Topology};

    fn network(topo: Topology, snr: f64, seed: u64, mode: AccessMode) -> PmacNetwork {
        let plan = FrequencyPlan::default();
        let table = SnrTable::uniform(&topo, &plan, snr);
        let medium = Medium::new(Channel::new(topo, plan, table, 10.0).unwrap(), seed);
        PmacNetwork::new(medium, NodeId(0), PmacConfig { mode, ..Default::default() }).unwrap()
    }

    #[test]
    fn select_route_rules() {
        assert_eq!(select_route(&[(NodeId(1), 25.0), (NodeId(2), 18.0)]).unwrap().0, NodeId(1));
        assert_eq!(select_route(&[(NodeId(2), 20.0), (NodeId(1), 20.0)]).unwrap().0, NodeId(1));
        assert_eq!(select_route(&[(NodeId(5), 3.0)]).unwrap().0, NodeId(5));
        assert!(select_route(&[]).is_err());
    }

    #[test]
    fn pte_round_takes_full_window() {
        let mut net = network(Topology::star(4), 30.0, 1, AccessMode::Fair);
        let out = net.run_pte(NodeId(0)).unwrap();
        assert_eq!((out.ended - out.started).as_micros(), 257 * 220);
        assert!(out.activity);
    }

    #[test]
    fn no_responders_empty() {
        let mut net = network(Topology::star(1), 30.0, 1, AccessMode::Fair);
        let out = net.run_pte(NodeId(0)).unwrap();
        assert!(out.records.is_empty());
        assert!(!out.activity);
    }

    #[test]
    fn tquery_unknown_dt_no_reply() {
        let mut net = network(Topology::star(2), 30.0, 1, AccessMode::Fair);
        let t0 = net.now();
        let rec = PteRecord { dt: DeltaT(999_999), freq: 0, snr_db: 0.0 };
        assert_eq!(net.run_tquery(NodeId(0), rec).unwrap(), TQueryOutcome::NoReply);
        // query packet + timeout
        assert_eq!((net.now() - t0).as_micros(), 2 * 10_445);
    }

    #[test]
    fn single_node_joins_level_one() {
        let mut net = network(Topology::star(2), 30.0, 9, AccessMode::Fair);
        let rep = net.establish_network().unwrap();
        assert_eq!(rep.joins.len(), 1);
        assert_eq!(rep.joins[0].level, 1);
        assert_eq!(rep.joins[0].parent, NodeId(0));
        assert!(rep.unjoined.is_empty());
        let tx = |tag: &str| rep.trace.count_tx(|k| k.tag() == tag);
        assert_eq!(tx("t-query"), 1);
        assert_eq!(tx("net-config"), 1);
        assert_eq!(tx("net-config-confirm"), 1);
    }

    #[test]
    fn netconfig_unreachable_times_out() {
        let topo = Topology::star(2);
        let plan = FrequencyPlan::default();
        let mut table = SnrTable::uniform(&topo, &plan, 30.0);
        table.set_directed(NodeId(0), NodeId(1), 0, 1.0);
        let medium = Medium::new(Channel::new(topo, plan, table, 10.0).unwrap(), 1);
        let mut net = PmacNetwork::new(medium, NodeId(0), PmacConfig::default()).unwrap();
        let out = net.run_netconfig(NodeId(1), Sid(1), &[NodeId(0), NodeId(1)]).unwrap();
        assert_eq!(out, NetConfigOutcome::Timeout);
        assert!(!net.node(NodeId(1)).joined);
        assert_eq!(net.node(NodeId(1)).sid, None);
    }

    #[test]
    fn keep_alive_only_moves_deadline() {
        let mut net = network(Topology::star(2), 30.0, 2, AccessMode::Fair);
        net.establish_network().unwrap();
        let before = net.node(NodeId(1)).clone();
        net.advance(SimTime::from_micros(1_000_000)).unwrap();
        let sid = before.sid.unwrap();
        let out = net.run_netconfig(NodeId(1), sid, &[NodeId(0), NodeId(1)]).unwrap();
        assert_eq!(out, NetConfigOutcome::Confirmed);
        let after = net.node(NodeId(1));
        assert!(after.survival_deadline.unwrap() > before.survival_deadline.unwrap());
        assert_eq!((after.sid, after.nwkid, after.joined, after.parent_route, after.level),
                   (before.sid, before.nwkid, before.joined, before.parent_route, before.level));
    }

    #[test]
    fn heartbeat_expiry_lapses() {
        let mut net = network(Topology::star(3), 30.0, 2, AccessMode::Fair);
        net.establish_network().unwrap();
        let lapsed = net.advance(SimTime::from_micros(DEFAULT_HEARTBEAT_US + 1)).unwrap();
        assert_eq!(lapsed.len(), 2);
        assert!(lapsed.iter().all(|n| net.node(*n).sid.is_some() && !net.node(*n).joined));
    }

    #[test]
    fn relay_without_unjoined_neighbors() {
        let mut net = network(Topology::chain(2), 30.0, 4, AccessMode::Fair);
        net.establish_network().unwrap();
        let out = net.run_pbeacon(NodeId(1)).unwrap();
        assert!(out.records.is_empty());
        assert!(!out.timeout);
    }

    #[test]
    fn access_mode_tags() {
        assert_eq!("fair".parse::<AccessMode>().unwrap(), AccessMode::Fair);
        assert_eq!("fast".parse::<AccessMode>().unwrap(), AccessMode::Fast);
        assert!("slow".parse::<AccessMode>().is_err());
    }
}
