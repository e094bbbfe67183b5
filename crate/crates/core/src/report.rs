//! Establishment outcome shared by every protocol, so that runs can be
//! compared field for field.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::ids::{NodeId, Sid};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Pmac,
    Csma,
    FdPmac,
    FdCsma,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Pmac, Protocol::Csma, Protocol::FdPmac, Protocol::FdCsma];

    pub fn tag(self) -> &'static str {
        match self {
            Protocol::Pmac => "pmac",
            Protocol::Csma => "csma",
            Protocol::FdPmac => "fd-pmac",
            Protocol::FdCsma => "fd-csma",
        }
    }

    pub fn is_frequency_division(self) -> bool {
        matches!(self, Protocol::FdPmac | Protocol::FdCsma)
    }

    pub fn uses_preamble_access(self) -> bool {
        matches!(self, Protocol::Pmac | Protocol::FdPmac)
    }

    /// The protocol with the same frequency mode but the other access method.
    pub fn counterpart(self) -> Protocol {
        match self {
            Protocol::Pmac => Protocol::Csma,
            Protocol::Csma => Protocol::Pmac,
            Protocol::FdPmac => Protocol::FdCsma,
            Protocol::FdCsma => Protocol::FdPmac,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.tag() == s)
            .ok_or_else(|| format!("unknown protocol `{s}` (valid: pmac, csma, fd-pmac, fd-csma)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinRecord {
    pub node: NodeId,
    pub sid: Sid,
    pub level: u32,
    pub parent: NodeId,
    pub at: SimTime,
}

/// Operating frequencies of a parent/child link after sweeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkFrequency {
    pub parent: NodeId,
    pub child: NodeId,
    pub up: usize,
    pub down: usize,
}

#[derive(Debug, Clone)]
pub struct EstablishReport {
    pub protocol: Protocol,
    pub root: NodeId,
    /// Admissions in the order they happened.
    pub joins: Vec<JoinRecord>,
    pub unjoined: Vec<NodeId>,
    /// Join order per level, level 1 first.
    pub levels: Vec<Vec<NodeId>>,
    /// Level passes, beacon periods or cycles, including the final empty one.
    pub rounds: u32,
    pub total_time: SimTime,
    pub link_freqs: Vec<LinkFrequency>,
    pub trace: Trace,
}

impl EstablishReport {
    pub fn joined_nodes(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self.joins.iter().map(|j| j.node).collect();
        v.sort();
        v
    }

    pub fn sids(&self) -> BTreeMap<NodeId, Sid> {
        self.joins.iter().map(|j| (j.node, j.sid)).collect()
    }

    pub fn parents(&self) -> BTreeMap<NodeId, NodeId> {
        self.joins.iter().map(|j| (j.node, j.parent)).collect()
    }

    pub fn join_of(&self, node: NodeId) -> Option<&JoinRecord> {
        self.joins.iter().find(|j| j.node == node)
    }

    /// Hop path from the root, root first.
    pub fn path_to(&self, node: NodeId) -> Option<Vec<NodeId>> {
        let parents = self.parents();
        let mut path = vec![node];
        let mut cur = node;
        while cur != self.root {
            cur = *parents.get(&cur)?;
            if path.contains(&cur) {
                return None;
            }
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }

    pub fn last_join_time(&self) -> SimTime {
        self.joins.iter().map(|j| j.at).max().unwrap_or(SimTime::ZERO)
    }
}

pub(crate) fn levels_from(joins: &[JoinRecord]) -> Vec<Vec<NodeId>> {
    let mut levels: Vec<Vec<NodeId>> = Vec::new();
    for j in joins {
        let idx = j.level.max(1) as usize - 1;
        if levels.len() <= idx {
            levels.resize(idx + 1, Vec::new());
        }
        levels[idx].push(j.node);
    }
    levels
}
