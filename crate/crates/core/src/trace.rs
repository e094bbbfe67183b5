//! Append-only simulation trace.
//!
//! Serialized as JSON lines. Every record carries `(at, seq)`; replays with
//! the same scenario and seed reproduce the file byte for byte.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::channel::DeliveryStatus;
use crate::engine::SimTime;
use crate::frame::FrameKind;
use crate::ids::{NodeId, Sid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TraceEvent {
    /// A transmission started. `node` is the sender.
    Tx { attempt: u64, dest: Option<NodeId>, freq: usize, duration_us: u64, frame: FrameKind },
    /// Per-receiver outcome at the end of a transmission. `node` is the receiver.
    Rx { attempt: u64, sender: NodeId, status: DeliveryStatus, snr_db: f64 },
    /// A responder stored a PTE time difference.
    DtStored { initiator: NodeId, dt_us: u64, freq: usize },
    /// Stored time differences were cleared after a T-Query phase.
    DtCleared,
    Joined { sid: Sid, level: u32, parent: NodeId },
    KeptAlive { sid: Sid, deadline_us: u64 },
    Lapsed { sid: Option<Sid> },
    Lost,
    RoleChanged { from: String, to: String },
    RouteSelected { via: NodeId, quality_db: f64 },
    SweepDone { lower: NodeId, mechanism: String, best_up: Option<usize>, best_down: Option<usize>, comm_count: u32 },
    Phase { name: String },
}

impl TraceEvent {
    pub fn label(&self) -> &'static str {
        match self {
            TraceEvent::Tx { .. } => "tx",
            TraceEvent::Rx { .. } => "rx",
            TraceEvent::DtStored { .. } => "dt-stored",
            TraceEvent::DtCleared => "dt-cleared",
            TraceEvent::Joined { .. } => "joined",
            TraceEvent::KeptAlive { .. } => "kept-alive",
            TraceEvent::Lapsed { .. } => "lapsed",
            TraceEvent::Lost => "lost",
            TraceEvent::RoleChanged { .. } => "role-changed",
            TraceEvent::RouteSelected { .. } => "route-selected",
            TraceEvent::SweepDone { .. } => "sweep-done",
            TraceEvent::Phase { .. } => "phase",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub at: SimTime,
    pub seq: u64,
    pub node: Option<NodeId>,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, at: SimTime, node: Option<NodeId>, event: TraceEvent) {
        if let Some(last) = self.records.last() {
            debug_assert!(last.at <= at, "trace must be time-ordered");
        }
        let seq = self.records.len() as u64;
        self.records.push(TraceRecord { at, seq, node, event });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_time(&self) -> SimTime {
        self.records.last().map(|r| r.at).unwrap_or(SimTime::ZERO)
    }

    /// Number of transmissions whose frame satisfies `pred`.
    pub fn count_tx(&self, pred: impl Fn(&FrameKind) -> bool) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(&r.event, TraceEvent::Tx { frame, .. } if pred(frame)))
            .count()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(io::Error::other)?);
        }
        Ok(Self { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let mut t = Trace::new();
        t.push(SimTime::ZERO, Some(NodeId(0)), TraceEvent::Phase { name: "pte".into() });
        t.push(
            SimTime::from_micros(220),
            Some(NodeId(1)),
            TraceEvent::Tx { attempt: 0, dest: Some(NodeId(0)), freq: 0, duration_us: 220, frame: FrameKind::Beacon },
        );
        t.push(
            SimTime::from_micros(440),
            Some(NodeId(0)),
            TraceEvent::Rx { attempt: 0, sender: NodeId(1), status: DeliveryStatus::Delivered, snr_db: 21.25 },
        );
        let text = t.to_jsonl();
        assert!(text.lines().nth(1).unwrap().contains("\"tag\":\"beacon\""));
        let back = Trace::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, t);
    }
}
