#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use pmac_sim::channel::{Channel, DeliveryStatus, FrequencyPlan, SnrTable, Topology};
use pmac_sim::engine::RngStream;
use pmac_sim::frame::{FrameKind, PreambleMode};
use pmac_sim::ids::{NodeId, Sid};
use pmac_sim::medium::Medium;
use pmac_sim::pmac::{AccessMode, PmacConfig, PmacNetwork};
use pmac_sim::report::EstablishReport;
use pmac_sim::trace::{Trace, TraceEvent};

pub fn n(i: u32) -> NodeId {
    NodeId(i)
}

pub fn uniform_medium(topo: Topology, db: f64, seed: u64) -> Medium {
    let plan = FrequencyPlan::default();
    let table = SnrTable::uniform(&topo, &plan, db);
    Medium::new(Channel::new(topo, plan, table, 10.0).unwrap(), seed)
}

pub fn random_medium(topo: Topology, seed: u64) -> Medium {
    let plan = FrequencyPlan::default();
    let mut rng = RngStream::new(seed, u64::MAX);
    let table = SnrTable::generate(&topo, &plan, &mut rng, 12.0, 36.0, false).unwrap();
    Medium::new(Channel::new(topo, plan, table, 10.0).unwrap(), seed)
}

/// Gateway 0 reaches relays 1 and 2; both relays reach nodes 3 and 4.
/// Node 3 hears relay 1 better, node 4 hears relay 2 better.
pub fn two_relay_fixture(seed: u64) -> Medium {
    let topo = Topology::from_edges(5, &[(0, 1), (0, 2), (1, 3), (2, 3), (1, 4), (2, 4)]).unwrap();
    let plan = FrequencyPlan::default();
    let mut table = SnrTable::uniform(&topo, &plan, 30.0);
    for f in 0..plan.n_points() {
        for (a, b, db) in [(1, 3, 28.0), (2, 3, 19.0), (1, 4, 18.0), (2, 4, 25.0)] {
            table.set_directed(n(a), n(b), f, db);
            table.set_directed(n(b), n(a), f, db);
        }
    }
    Medium::new(Channel::new(topo, plan, table, 10.0).unwrap(), seed)
}

pub fn pmac(medium: Medium, mode: AccessMode) -> PmacNetwork {
    PmacNetwork::new(medium, n(0), PmacConfig { mode, ..Default::default() }).unwrap()
}

/// Topology with `count` nodes besides the gateway, picked by `kind`.
pub fn topology(kind: u8, count: usize, seed: u64) -> Topology {
    let mut rng = RngStream::new(seed, u64::MAX - 1);
    match kind % 4 {
        0 => Topology::chain(count + 1),
        1 => Topology::star(count + 1),
        2 => Topology::random_tree(count + 1, &mut rng),
        _ => Topology::random_connected(count + 1, count / 3, &mut rng),
    }
}

pub fn has_collision(trace: &Trace) -> bool {
    trace.records().iter().any(|r| matches!(r.event, TraceEvent::Rx { status: DeliveryStatus::Collided, .. }))
}

/// Every SID in the report is distinct and none is the gateway's.
pub fn check_sid_uniqueness(report: &EstablishReport) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for j in &report.joins {
        if j.sid == Sid(0) || !seen.insert(j.sid) {
            return Err(format!("duplicate or reserved {}", j.sid));
        }
    }
    Ok(())
}

/// Every joined node has a finite parent chain ending at the root, and its
/// level equals its depth in that chain.
pub fn check_loop_free(report: &EstablishReport) -> Result<(), String> {
    for j in &report.joins {
        let path = report.path_to(j.node).ok_or_else(|| format!("{} has no loop-free route", j.node))?;
        if path.len() as u32 != j.level + 1 {
            return Err(format!("{} at level {} but path {:?}", j.node, j.level, path));
        }
    }
    Ok(())
}

/// Replays joined/lapsed state from the trace and rejects any preamble reply
/// (a PTE preamble with a destination) sent by a node in the network.
pub fn check_joined_silence(trace: &Trace, gateway: NodeId) -> Result<(), String> {
    let mut joined: BTreeSet<NodeId> = BTreeSet::from([gateway]);
    for r in trace.records() {
        match &r.event {
            TraceEvent::Joined { .. } => {
                joined.insert(r.node.unwrap());
            }
            TraceEvent::Lapsed { .. } => {
                joined.remove(&r.node.unwrap());
            }
            TraceEvent::Tx { dest: Some(_), frame: FrameKind::Preamble { mode: PreambleMode::Pte, .. }, .. } => {
                let s = r.node.unwrap();
                if joined.contains(&s) {
                    return Err(format!("joined {s} replied to a PTE at {}", r.at));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// For every T-Query answered in the trace, brute-force scan every node's
/// stored time difference: the replying node must be the only one holding
/// the queried value for that relay and frequency. Returns the number of
/// answered queries checked.
pub fn check_dt_oracle(trace: &Trace) -> Result<usize, String> {
    let mut stored: BTreeMap<NodeId, (u64, NodeId, usize)> = BTreeMap::new();
    let mut open: Option<(NodeId, u64, usize)> = None;
    let mut checked = 0;
    for r in trace.records() {
        match &r.event {
            TraceEvent::DtStored { initiator, dt_us, freq } => {
                stored.insert(r.node.unwrap(), (*dt_us, *initiator, *freq));
            }
            TraceEvent::DtCleared => stored.clear(),
            TraceEvent::Tx { dest: None, frame: FrameKind::TQuery { dt_us }, freq, .. } => {
                open = Some((r.node.unwrap(), *dt_us, *freq));
            }
            TraceEvent::Tx { dest: Some(d), frame: FrameKind::TQueryReply { .. }, .. } => {
                let Some((relay, dt, freq)) = open else { continue };
                if *d != relay {
                    continue;
                }
                open = None;
                let holders: Vec<NodeId> = stored
                    .iter()
                    .filter(|(_, v)| **v == (dt, relay, freq))
                    .map(|(k, _)| *k)
                    .collect();
                if holders != vec![r.node.unwrap()] {
                    return Err(format!("query {dt}us via {relay}: replier {:?}, holders {holders:?}", r.node));
                }
                checked += 1;
            }
            _ => {}
        }
    }
    Ok(checked)
}
