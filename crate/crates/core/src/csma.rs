//! CSMA/CA association baseline.
//!
//! Each beacon period starts with every joined node beaconing in its own
//! packet slot, in join order. A contention window of `window_slots` data
//! slots follows. Every unassociated station (xSTA) that heard a beacon picks
//! the strongest beaconer as target and sends an association request in a
//! uniformly drawn slot; targets holding a request answer the same way. The
//! first slot holding a decodable frame wins the window and the remaining
//! contenders sense it and defer to the next period, so one association takes
//! two winning windows: the request and the reply.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::{DeliveryStatus, TransmissionAttempt};
use crate::engine::{RngStream, SimTime};
use crate::error::SimError;
use crate::frame::{Frame, FrameKind};
use crate::ids::{NodeId, Sid};
use crate::medium::{Medium, SlotTiming};
use crate::report::{levels_from, EstablishReport, JoinRecord, Protocol};
use crate::trace::TraceEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CsmaRole {
    /// Central coordinator (the gateway).
    Cco,
    /// Proxy coordinator: a station relaying for children.
    Pco,
    Sta,
    /// Not yet associated.
    XSta,
}

impl CsmaRole {
    pub fn tag(self) -> &'static str {
        match self {
            CsmaRole::Cco => "CCO",
            CsmaRole::Pco => "PCO",
            CsmaRole::Sta => "STA",
            CsmaRole::XSta => "xSTA",
        }
    }
}

impl fmt::Display for CsmaRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Contention state of one station for one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackoffState {
    pub window: u32,
    pub slot: Option<u32>,
}

impl BackoffState {
    pub fn new(window: u32) -> Result<Self, SimError> {
        if window == 0 {
            return Err(SimError::Contract("contention window must be positive".into()));
        }
        Ok(Self { window, slot: None })
    }

    /// Draws a slot uniformly from `[0, window)`.
    pub fn contend(&mut self, rng: &mut RngStream) -> Result<u32, SimError> {
        let s = rng.draw_uniform(0, self.window as i64 - 1)? as u32;
        self.slot = Some(s);
        Ok(s)
    }
}

/// Strongest heard beacon; ties go to the smallest sender id.
pub fn pick_beacon(heard: &[(NodeId, f64)]) -> Option<(NodeId, f64)> {
    heard
        .iter()
        .copied()
        .reduce(|best, c| if c.1 > best.1 || (c.1 == best.1 && c.0 < best.0) { c } else { best })
}

/// One frame contending in a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Contender {
    pub sender: NodeId,
    pub dest: NodeId,
    pub slot: u32,
    pub freq: usize,
    pub frame: FrameKind,
}

/// Outcome of one contention window.
#[derive(Debug, Clone, PartialEq)]
pub enum WindowOutcome {
    /// A frame got through in `slot`.
    Granted { sender: NodeId, dest: NodeId, slot: u32, quality_db: f64, frame: FrameKind },
    /// No frame was decoded; `collided` tells whether any was lost to a
    /// collision rather than to the channel.
    Idle { collided: bool },
}

/// Plays the slots in ascending order until a frame is decoded by its
/// destination. Leaves the clock at the end of the winning frame.
pub fn run_contention(
    medium: &mut Medium,
    window_start: SimTime,
    timing: &SlotTiming,
    contenders: &[Contender],
) -> Result<WindowOutcome, SimError> {
    let mut by_slot: BTreeMap<u32, Vec<&Contender>> = BTreeMap::new();
    for c in contenders {
        by_slot.entry(c.slot).or_default().push(c);
    }
    let mut collided = false;
    for (slot, group) in by_slot {
        let start = window_start + SimTime::from_micros(slot as u64 * timing.data_slot_us);
        let attempts = group
            .iter()
            .map(|c| {
                let frame = Frame::new(c.frame.clone(), timing.packet(), c.freq);
                TransmissionAttempt::new(c.sender, Some(c.dest), frame, start)
            })
            .collect();
        let results = medium.exchange(attempts)?;
        let mut winners: Vec<(&Contender, f64)> = Vec::new();
        for (c, r) in group.iter().zip(&results) {
            match r.status_at(c.dest) {
                Some(DeliveryStatus::Delivered) => winners.push((c, r.delivered_to(c.dest).unwrap_or(f64::NAN))),
                Some(DeliveryStatus::Collided) => collided = true,
                _ => {}
            }
        }
        if let Some((c, quality_db)) = winners.into_iter().min_by_key(|w| w.0.sender) {
            return Ok(WindowOutcome::Granted {
                sender: c.sender,
                dest: c.dest,
                slot,
                quality_db,
                frame: c.frame.clone(),
            });
        }
    }
    Ok(WindowOutcome::Idle { collided })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsmaConfig {
    pub timing: SlotTiming,
    pub freq_index: usize,
    /// Safety bound on beacon periods.
    pub max_periods: u32,
}

impl Default for CsmaConfig {
    fn default() -> Self {
        Self { timing: SlotTiming::default(), freq_index: 0, max_periods: 100_000 }
    }
}

pub struct CsmaNetwork {
    medium: Medium,
    cfg: CsmaConfig,
    root: NodeId,
    roles: Vec<CsmaRole>,
    parent: Vec<Option<NodeId>>,
    level: Vec<u32>,
    sid: Vec<Option<Sid>>,
    next_sid: u16,
    /// Beaconers in join order, root first.
    beaconers: Vec<NodeId>,
    /// Requests heard by a target and awaiting its reply: node -> target.
    pending: BTreeMap<NodeId, NodeId>,
    joins: Vec<JoinRecord>,
}

impl CsmaNetwork {
    pub fn new(medium: Medium, root: NodeId, cfg: CsmaConfig) -> Result<Self, SimError> {
        cfg.timing.validate()?;
        let topo = &medium.channel().topology;
        if !topo.contains(root) {
            return Err(SimError::UnknownNode(root));
        }
        medium.channel().plan.check(cfg.freq_index)?;
        let n = topo.node_count();
        let mut roles = vec![CsmaRole::XSta; n];
        roles[root.index()] = CsmaRole::Cco;
        let mut sid = vec![None; n];
        sid[root.index()] = Some(Sid(0));
        Ok(Self {
            medium,
            cfg,
            root,
            roles,
            parent: vec![None; n],
            level: vec![0; n],
            sid,
            next_sid: 1,
            beaconers: vec![root],
            pending: BTreeMap::new(),
            joins: Vec::new(),
        })
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn into_medium(self) -> Medium {
        self.medium
    }

    pub fn role(&self, node: NodeId) -> CsmaRole {
        self.roles[node.index()]
    }

    pub fn joins(&self) -> &[JoinRecord] {
        &self.joins
    }

    fn set_role(&mut self, node: NodeId, to: CsmaRole) {
        let from = self.roles[node.index()];
        if from != to {
            self.roles[node.index()] = to;
            self.medium.note(Some(node), TraceEvent::RoleChanged { from: from.tag().into(), to: to.tag().into() });
        }
    }

    /// Beacon phase; returns the beacons each xSTA decoded.
    fn beacon_phase(&mut self) -> Result<BTreeMap<NodeId, Vec<(NodeId, f64)>>, SimError> {
        let packet = self.cfg.timing.packet();
        let mut heard: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
        for b in self.beaconers.clone() {
            let r = self.medium.send(b, None, FrameKind::Beacon, packet, self.cfg.freq_index)?;
            for o in r.delivered() {
                if self.roles[o.receiver.index()] == CsmaRole::XSta && !self.pending.contains_key(&o.receiver) {
                    heard.entry(o.receiver).or_default().push((b, o.snr_db));
                }
            }
        }
        Ok(heard)
    }

    /// One beacon period. Returns `(admitted, progressed)`: progress means a
    /// frame won the window or contenders collided.
    pub fn run_period(&mut self) -> Result<(Option<NodeId>, bool), SimError> {
        let timing = self.cfg.timing;
        let freq = self.cfg.freq_index;
        let heard = self.beacon_phase()?;
        let window_start = self.medium.now();
        let mut contenders = Vec::new();
        for (node, list) in &heard {
            let Some((target, _)) = pick_beacon(list) else { continue };
            let slot = BackoffState::new(timing.window_slots)?.contend(self.medium.rng(*node))?;
            contenders.push(Contender { sender: *node, dest: target, slot, freq, frame: FrameKind::AssocRequest { target } });
        }
        // A target answers one pending request per window, lowest node first.
        let mut answering: BTreeSet<NodeId> = BTreeSet::new();
        for (&node, &target) in &self.pending {
            if answering.insert(target) {
                let slot = BackoffState::new(timing.window_slots)?.contend(self.medium.rng(target))?;
                contenders.push(Contender { sender: target, dest: node, slot, freq, frame: FrameKind::AssocReply });
            }
        }
        let mut admitted = None;
        let progressed = match run_contention(&mut self.medium, window_start, &timing, &contenders)? {
            WindowOutcome::Granted { sender, dest, frame, .. } => {
                if matches!(frame, FrameKind::AssocReply) {
                    self.pending.remove(&dest);
                    self.admit(dest, sender);
                    admitted = Some(dest);
                } else {
                    self.pending.insert(sender, dest);
                }
                true
            }
            WindowOutcome::Idle { collided } => collided,
        };
        let end = window_start + SimTime::from_micros(timing.window_slots as u64 * timing.data_slot_us);
        self.medium.advance_to(end)?;
        Ok((admitted, progressed))
    }

    fn admit(&mut self, node: NodeId, parent: NodeId) {
        let sid = Sid(self.next_sid);
        self.next_sid += 1;
        let level = self.level[parent.index()] + 1;
        self.sid[node.index()] = Some(sid);
        self.parent[node.index()] = Some(parent);
        self.level[node.index()] = level;
        self.beaconers.push(node);
        let at = self.medium.now();
        self.joins.push(JoinRecord { node, sid, level, parent, at });
        self.medium.note(Some(node), TraceEvent::Joined { sid, level, parent });
        self.set_role(node, CsmaRole::Sta);
        if self.roles[parent.index()] == CsmaRole::Sta {
            self.set_role(parent, CsmaRole::Pco);
        }
    }

    /// Beacon periods until one passes with no winner and no collision.
    pub fn establish_network(&mut self) -> Result<EstablishReport, SimError> {
        let started = self.medium.now();
        let mut periods = 0;
        loop {
            periods += 1;
            self.medium.note(Some(self.root), TraceEvent::Phase { name: format!("beacon-period-{periods}") });
            let (_, progressed) = self.run_period()?;
            if !progressed || periods >= self.cfg.max_periods {
                break;
            }
        }
        let joins = self.joins.clone();
        Ok(EstablishReport {
            protocol: Protocol::Csma,
            root: self.root,
            levels: levels_from(&joins),
            joins,
            unjoined: self.roles.iter().enumerate().filter(|(_, r)| **r == CsmaRole::XSta).map(|(i, _)| NodeId(i as u32)).collect(),
            rounds: periods,
            total_time: self.medium.now() - started,
            link_freqs: Vec::new(),
            trace: self.medium.trace().clone(),
        })
    }
}
