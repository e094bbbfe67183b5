use thiserror::Error;

use crate::engine::SimTime;
use crate::ids::NodeId;

/// Contract violations raised while building or running a simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("event scheduled at {at} but clock is already at {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("frequency index {index} outside plan of {points} points")]
    UnknownFrequency { index: usize, points: usize },
    #[error("missing SNR entry for {from} -> {to} at frequency {freq}")]
    MissingSnr { from: NodeId, to: NodeId, freq: usize },
    #[error("{0} and {1} are not linked")]
    NoLink(NodeId, NodeId),
    #[error("contract violation: {0}")]
    Contract(String),
}
