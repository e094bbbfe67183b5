//! Port utilization from a trace.
//!
//! A frame is useful at a port if it was delivered there, or if the port sent
//! it and it reached its destination (any receiver, for broadcasts). Collided
//! or undecodable airtime counts as busy but not useful. The reported sample
//! is the busiest port: the node with the most useful time in the window.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::DeliveryStatus;
use crate::engine::SimTime;
use crate::error::SimError;
use crate::ids::NodeId;
use crate::trace::{Trace, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilizationSample {
    pub window: (SimTime, SimTime),
    pub port: Option<NodeId>,
    pub busy_useful_us: u64,
    pub busy_total_us: u64,
}

impl UtilizationSample {
    pub fn window_us(&self) -> u64 {
        (self.window.1 - self.window.0).as_micros()
    }

    pub fn fraction(&self) -> f64 {
        self.busy_useful_us as f64 / self.window_us() as f64
    }
}

struct Frame {
    sender: NodeId,
    dest: Option<NodeId>,
    start: u64,
    end: u64,
    delivered: Vec<NodeId>,
    heard: Vec<NodeId>,
}

/// Length of the union of `spans` clipped to `[lo, hi)`.
fn union_len(mut spans: Vec<(u64, u64)>, lo: u64, hi: u64) -> u64 {
    spans.retain(|s| s.1 > lo && s.0 < hi);
    spans.sort_unstable();
    let mut total = 0;
    let mut cur: Option<(u64, u64)> = None;
    for (s, e) in spans {
        let (s, e) = (s.max(lo), e.min(hi));
        match cur {
            Some((cs, ce)) if s <= ce => cur = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                cur = Some((s, e));
            }
            None => cur = Some((s, e)),
        }
    }
    total + cur.map_or(0, |(s, e)| e - s)
}

pub fn utilization_sample(trace: &Trace, start: SimTime, end: SimTime) -> Result<UtilizationSample, SimError> {
    if end <= start {
        return Err(SimError::Contract(format!("empty utilization window [{start}, {end})")));
    }
    let mut frames: BTreeMap<u64, Frame> = BTreeMap::new();
    for r in trace.records() {
        match &r.event {
            TraceEvent::Tx { attempt, dest, duration_us, .. } => {
                let sender = r.node.ok_or_else(|| SimError::Contract("tx record without sender".into()))?;
                let s = r.at.as_micros();
                frames.insert(
                    *attempt,
                    Frame { sender, dest: *dest, start: s, end: s + duration_us, delivered: Vec::new(), heard: Vec::new() },
                );
            }
            TraceEvent::Rx { attempt, status, .. } => {
                if let (Some(f), Some(rx)) = (frames.get_mut(attempt), r.node) {
                    f.heard.push(rx);
                    if *status == DeliveryStatus::Delivered {
                        f.delivered.push(rx);
                    }
                }
            }
            _ => {}
        }
    }
    let mut useful: BTreeMap<NodeId, Vec<(u64, u64)>> = BTreeMap::new();
    let mut busy: BTreeMap<NodeId, Vec<(u64, u64)>> = BTreeMap::new();
    for f in frames.values() {
        let span = (f.start, f.end);
        busy.entry(f.sender).or_default().push(span);
        let reached = match f.dest {
            Some(d) => f.delivered.contains(&d),
            None => !f.delivered.is_empty(),
        };
        if reached {
            useful.entry(f.sender).or_default().push(span);
        }
        for &rx in &f.heard {
            busy.entry(rx).or_default().push(span);
        }
        for &rx in &f.delivered {
            useful.entry(rx).or_default().push(span);
        }
    }
    let (lo, hi) = (start.as_micros(), end.as_micros());
    let mut best = UtilizationSample { window: (start, end), port: None, busy_useful_us: 0, busy_total_us: 0 };
    for (port, spans) in useful {
        let u = union_len(spans, lo, hi);
        if u > best.busy_useful_us {
            let total = union_len(busy.remove(&port).unwrap_or_default(), lo, hi);
            best = UtilizationSample { window: (start, end), port: Some(port), busy_useful_us: u, busy_total_us: total };
        }
    }
    Ok(best)
}

/// Useful airtime at the busiest port divided by the window length.
pub fn compute_utilization(trace: &Trace, start: SimTime, end: SimTime) -> Result<f64, SimError> {
    Ok(utilization_sample(trace, start, end)?.fraction())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FrameKind;

    fn tx(t: &mut Trace, attempt: u64, at: u64, from: u32, to: Option<u32>, dur: u64) {
        t.push(
            SimTime::from_micros(at),
            Some(NodeId(from)),
            TraceEvent::Tx { attempt, dest: to.map(NodeId), freq: 0, duration_us: dur, frame: FrameKind::Data },
        );
    }

    fn rx(t: &mut Trace, attempt: u64, at: u64, from: u32, to: u32, status: DeliveryStatus) {
        t.push(
            SimTime::from_micros(at),
            Some(NodeId(to)),
            TraceEvent::Rx { attempt, sender: NodeId(from), status, snr_db: 20.0 },
        );
    }

    #[test]
    fn idle_trace_is_zero() {
        let t = Trace::new();
        assert_eq!(compute_utilization(&t, SimTime::ZERO, SimTime::from_micros(1000)).unwrap(), 0.0);
    }

    #[test]
    fn empty_window_rejected() {
        let t = Trace::new();
        assert!(compute_utilization(&t, SimTime::from_micros(5), SimTime::from_micros(5)).is_err());
    }

    #[test]
    fn one_packet_in_ten() {
        let mut t = Trace::new();
        tx(&mut t, 0, 0, 1, Some(0), 10_445);
        rx(&mut t, 0, 10_445, 1, 0, DeliveryStatus::Delivered);
        let s = utilization_sample(&t, SimTime::ZERO, SimTime::from_micros(104_450)).unwrap();
        assert_eq!(s.fraction(), 0.1);
        assert!(s.busy_useful_us <= s.busy_total_us && s.busy_total_us <= s.window_us());
    }

    #[test]
    fn collisions_are_not_useful() {
        let mut t = Trace::new();
        tx(&mut t, 0, 0, 1, Some(0), 100);
        tx(&mut t, 1, 50, 2, Some(0), 100);
        rx(&mut t, 0, 100, 1, 0, DeliveryStatus::Collided);
        rx(&mut t, 1, 150, 2, 0, DeliveryStatus::Collided);
        assert_eq!(compute_utilization(&t, SimTime::ZERO, SimTime::from_micros(200)).unwrap(), 0.0);
    }

    #[test]
    fn overlapping_frames_count_once() {
        let mut t = Trace::new();
        tx(&mut t, 0, 0, 0, None, 100);
        tx(&mut t, 1, 50, 0, None, 100);
        rx(&mut t, 0, 100, 0, 1, DeliveryStatus::Delivered);
        rx(&mut t, 1, 150, 0, 2, DeliveryStatus::Delivered);
        let s = utilization_sample(&t, SimTime::ZERO, SimTime::from_micros(300)).unwrap();
        assert_eq!(s.busy_useful_us, 150);
        assert_eq!(s.port, Some(NodeId(0)));
    }

    #[test]
    fn union_clips_to_window() {
        assert_eq!(union_len(vec![(0, 10), (5, 20), (30, 40)], 8, 35), 17);
        assert_eq!(union_len(vec![], 0, 10), 0);
    }
}
