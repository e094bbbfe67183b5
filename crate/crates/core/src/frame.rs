//! Protocol frames carried over the abstract channel.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::ids::{Mac, NodeId, NwkId, Sid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreambleMode {
    Pte,
    Data,
}

/// What a T-Query reply identifies the responder by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Identity {
    Mac(Mac),
    Sid(Sid),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "kebab-case")]
pub enum FrameKind {
    Preamble { mode: PreambleMode, slots: [bool; 4] },
    TQuery { dt_us: u64 },
    TQueryReply { id: Identity },
    NetConfig { mac: Option<Mac>, sid: Sid, nwkid: NwkId, heartbeat_us: u64 },
    NetConfigConfirm { sid: Sid },
    PBeacon { relay: NodeId },
    PteReport { records: u32 },
    Beacon,
    AssocRequest { target: NodeId },
    AssocReply,
    ApprovalRequest { candidate: NodeId },
    ApprovalReply { candidate: NodeId },
    SweepProbe { round: u32 },
    SweepReply { round: u32 },
    SweepConfirm { up: usize, down: usize },
    Poll,
    Data,
}

impl FrameKind {
    /// Stable tag used in traces and CSV output.
    pub fn tag(&self) -> &'static str {
        match self {
            FrameKind::Preamble { mode: PreambleMode::Pte, .. } => "preamble-pte",
            FrameKind::Preamble { mode: PreambleMode::Data, .. } => "preamble-data",
            FrameKind::TQuery { .. } => "t-query",
            FrameKind::TQueryReply { .. } => "t-query-reply",
            FrameKind::NetConfig { .. } => "net-config",
            FrameKind::NetConfigConfirm { .. } => "net-config-confirm",
            FrameKind::PBeacon { .. } => "p-beacon",
            FrameKind::PteReport { .. } => "pte-report",
            FrameKind::Beacon => "beacon",
            FrameKind::AssocRequest { .. } => "assoc-request",
            FrameKind::AssocReply => "assoc-reply",
            FrameKind::ApprovalRequest { .. } => "approval-request",
            FrameKind::ApprovalReply { .. } => "approval-reply",
            FrameKind::SweepProbe { .. } => "sweep-probe",
            FrameKind::SweepReply { .. } => "sweep-reply",
            FrameKind::SweepConfirm { .. } => "sweep-confirm",
            FrameKind::Poll => "poll",
            FrameKind::Data => "data",
        }
    }

    pub fn is_preamble(&self) -> bool {
        matches!(self, FrameKind::Preamble { .. })
    }

    pub fn is_sweep(&self) -> bool {
        matches!(
            self,
            FrameKind::SweepProbe { .. } | FrameKind::SweepReply { .. } | FrameKind::SweepConfirm { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub kind: FrameKind,
    pub duration: SimTime,
    pub freq_index: usize,
}

impl Frame {
    pub fn new(kind: FrameKind, duration: SimTime, freq_index: usize) -> Self {
        Self { kind, duration, freq_index }
    }
}
