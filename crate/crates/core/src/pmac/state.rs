//! Per-node protocol state and the gateway's MAC/SID binding table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::SimError;
use crate::ids::{Mac, NodeId, NwkId, Sid};

/// Time between a responder receiving the PTE broadcast and sending its reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeltaT(pub u64);

impl DeltaT {
    pub fn from_slot(slot: u64, preamble_slot_us: u64) -> Self {
        DeltaT(slot * preamble_slot_us)
    }

    pub fn micros(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    pub mac: Mac,
    pub sid: Option<Sid>,
    pub nwkid: Option<NwkId>,
    pub joined: bool,
    pub stored_dt: Option<DeltaT>,
    /// Initiator and frequency of the PTE that produced `stored_dt`.
    pub dt_peer: Option<(NodeId, usize)>,
    pub survival_deadline: Option<SimTime>,
    pub parent_route: Option<NodeId>,
    pub level: u32,
}

impl NodeState {
    pub fn new(id: NodeId) -> Self {
        Self {
            id,
            mac: Mac::for_node(id),
            sid: None,
            nwkid: None,
            joined: false,
            stored_dt: None,
            dt_peer: None,
            survival_deadline: None,
            parent_route: None,
            level: 0,
        }
    }

    pub fn clear_dt(&mut self) {
        self.stored_dt = None;
        self.dt_peer = None;
    }

    /// Leaves the network but keeps the SID binding.
    pub fn lapse(&mut self) {
        self.joined = false;
        self.parent_route = None;
    }
}

/// Bijective MAC <-> SID map held at the gateway.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BindingTable {
    by_mac: BTreeMap<Mac, Sid>,
    by_sid: BTreeMap<Sid, Mac>,
    next: u16,
}

impl BindingTable {
    pub fn new() -> Self {
        Self { next: 1, ..Default::default() }
    }

    /// Existing SID for `mac`, or a fresh one.
    pub fn bind(&mut self, mac: Mac) -> Result<Sid, SimError> {
        if let Some(&sid) = self.by_mac.get(&mac) {
            return Ok(sid);
        }
        while self.by_sid.contains_key(&Sid(self.next)) {
            self.next = self.next.checked_add(1).ok_or_else(|| SimError::Contract("SID space exhausted".into()))?;
        }
        let sid = Sid(self.next);
        self.by_mac.insert(mac, sid);
        self.by_sid.insert(sid, mac);
        Ok(sid)
    }

    pub fn sid_of(&self, mac: Mac) -> Option<Sid> {
        self.by_mac.get(&mac).copied()
    }

    pub fn mac_of(&self, sid: Sid) -> Option<Mac> {
        self.by_sid.get(&sid).copied()
    }

    pub fn len(&self) -> usize {
        self.by_mac.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_mac.is_empty()
    }

    pub fn is_bijective(&self) -> bool {
        self.by_mac.len() == self.by_sid.len() && self.by_mac.iter().all(|(m, s)| self.by_sid.get(s) == Some(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binding_is_stable_and_unique() {
        let mut b = BindingTable::new();
        let m1 = Mac::for_node(NodeId(1));
        let m2 = Mac::for_node(NodeId(2));
        let s1 = b.bind(m1).unwrap();
        let s2 = b.bind(m2).unwrap();
        assert_ne!(s1, s2);
        assert_eq!(b.bind(m1).unwrap(), s1);
        assert_eq!(b.mac_of(s2), Some(m2));
        assert!(b.is_bijective());
    }

    #[test]
    fn lapse_keeps_sid() {
        let mut n = NodeState::new(NodeId(4));
        n.sid = Some(Sid(7));
        n.joined = true;
        n.parent_route = Some(NodeId(2));
        n.lapse();
        assert!(!n.joined);
        assert_eq!(n.sid, Some(Sid(7)));
    }

    #[test]
    fn delta_t_from_slot() {
        assert_eq!(DeltaT::from_slot(7, 220).micros(), 1540);
        assert_eq!(DeltaT::from_slot(19, 220).micros(), 4180);
    }
}
