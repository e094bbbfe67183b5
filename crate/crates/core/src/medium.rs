//! The shared air: event engine, channel model, trace and per-node RNG
//! streams of one simulation instance.
//!
//! Protocol procedures are orchestrated sequentially by the coordinating node
//! (gateway, CCO or MN). Each step hands a batch of timed transmissions to
//! [`Medium::exchange`], which schedules their start and end on the event
//! engine, runs it to completion, and resolves collisions as each frame ends.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::{Channel, DeliveryOutcome, DeliveryStatus, TransmissionAttempt};
use crate::engine::{RngStream, SimTime, Simulation};
use crate::error::SimError;
use crate::frame::{Frame, FrameKind};
use crate::ids::NodeId;
use crate::trace::{Trace, TraceEvent};

/// OFDM data packet length in integer microseconds, rounded to nearest.
pub fn packet_duration_us(symbols: u64, fft_points: u64, cyclic_prefix: u64, sample_rate_hz: f64) -> u64 {
    let samples = (symbols * (fft_points + cyclic_prefix)) as f64;
    (samples / sample_rate_hz * 1e6).round() as u64
}

/// 12 symbols of 1024 + 64 samples at 1.25 MSPS.
pub const DEFAULT_PACKET_US: u64 = 10_445;
pub const DEFAULT_PREAMBLE_SLOT_US: u64 = 220;
pub const DEFAULT_WINDOW_SLOTS: u32 = 256;

/// Slot and packet durations shared by all protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotTiming {
    pub preamble_slot_us: u64,
    pub packet_us: u64,
    pub data_slot_us: u64,
    pub window_slots: u32,
}

impl Default for SlotTiming {
    fn default() -> Self {
        Self {
            preamble_slot_us: DEFAULT_PREAMBLE_SLOT_US,
            packet_us: DEFAULT_PACKET_US,
            data_slot_us: DEFAULT_PACKET_US,
            window_slots: DEFAULT_WINDOW_SLOTS,
        }
    }
}

impl SlotTiming {
    pub fn preamble_slot(&self) -> SimTime {
        SimTime::from_micros(self.preamble_slot_us)
    }

    pub fn packet(&self) -> SimTime {
        SimTime::from_micros(self.packet_us)
    }

    pub fn data_slot(&self) -> SimTime {
        SimTime::from_micros(self.data_slot_us)
    }

    /// Broadcast slot plus the reply window.
    pub fn pte_round(&self) -> SimTime {
        SimTime::from_micros((1 + self.window_slots as u64) * self.preamble_slot_us)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.preamble_slot_us == 0 || self.packet_us == 0 || self.data_slot_us == 0 || self.window_slots == 0 {
            return Err(SimError::Contract("slot durations and window must be positive".into()));
        }
        if self.packet_us > self.data_slot_us {
            return Err(SimError::Contract("a data packet must fit in one data slot".into()));
        }
        Ok(())
    }
}

/// Operating frequency per directed hop; unknown hops use the default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkFreqs {
    pub default_freq: usize,
    hops: BTreeMap<(NodeId, NodeId), usize>,
}

impl LinkFreqs {
    pub fn new(default_freq: usize) -> Self {
        Self { default_freq, hops: BTreeMap::new() }
    }

    pub fn set(&mut self, from: NodeId, to: NodeId, freq: usize) {
        self.hops.insert((from, to), freq);
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> usize {
        self.hops.get(&(from, to)).copied().unwrap_or(self.default_freq)
    }

    pub fn explicit(&self, from: NodeId, to: NodeId) -> Option<usize> {
        self.hops.get(&(from, to)).copied()
    }
}

#[derive(Debug, Clone)]
pub struct AttemptResult {
    pub id: u64,
    pub attempt: TransmissionAttempt,
    pub outcomes: Vec<DeliveryOutcome>,
}

impl AttemptResult {
    pub fn status_at(&self, node: NodeId) -> Option<DeliveryStatus> {
        self.outcomes.iter().find(|o| o.receiver == node).map(|o| o.status)
    }

    /// SNR at `node` if the frame was delivered there.
    pub fn delivered_to(&self, node: NodeId) -> Option<f64> {
        self.outcomes
            .iter()
            .find(|o| o.receiver == node && o.status == DeliveryStatus::Delivered)
            .map(|o| o.snr_db)
    }

    pub fn delivered(&self) -> impl Iterator<Item = &DeliveryOutcome> {
        self.outcomes.iter().filter(|o| o.status == DeliveryStatus::Delivered)
    }
}

#[derive(Debug, Clone, Copy)]
enum Air {
    Start(usize),
    End(usize),
}

pub struct Medium {
    sim: Simulation<Air>,
    channel: Channel,
    trace: Trace,
    seed: u64,
    rngs: BTreeMap<NodeId, RngStream>,
    next_attempt: u64,
}

impl Medium {
    pub fn new(channel: Channel, seed: u64) -> Self {
        Self { sim: Simulation::new(), channel, trace: Trace::new(), seed, rngs: BTreeMap::new(), next_attempt: 0 }
    }

    pub fn now(&self) -> SimTime {
        self.sim.now()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    /// The node's own random stream, created on first use.
    pub fn rng(&mut self, node: NodeId) -> &mut RngStream {
        let seed = self.seed;
        self.rngs.entry(node).or_insert_with(|| RngStream::new(seed, node.0 as u64))
    }

    pub fn note(&mut self, node: Option<NodeId>, event: TraceEvent) {
        self.trace.push(self.sim.now(), node, event);
    }

    pub fn advance_to(&mut self, t: SimTime) -> Result<(), SimError> {
        self.sim.advance_to(t)
    }

    pub fn idle(&mut self, d: SimTime) -> Result<(), SimError> {
        self.sim.advance_to(self.sim.now() + d)
    }

    /// Puts every attempt on the air and returns per-attempt outcomes in
    /// input order. The clock ends at the last frame's end.
    pub fn exchange(&mut self, attempts: Vec<TransmissionAttempt>) -> Result<Vec<AttemptResult>, SimError> {
        let mut order: Vec<usize> = (0..attempts.len()).collect();
        order.sort_by_key(|&i| (attempts[i].start, i));
        for a in &attempts {
            if !self.channel.topology.contains(a.sender) {
                return Err(SimError::UnknownNode(a.sender));
            }
            self.channel.plan.check(a.freq_index())?;
            if a.start < self.now() {
                return Err(SimError::ScheduleInPast { at: a.start, now: self.now() });
            }
        }
        for &i in &order {
            let a = &attempts[i];
            self.sim.schedule(a.start, Air::Start(i))?;
            self.sim.schedule(a.end(), Air::End(i))?;
        }
        let base_id = self.next_attempt;
        self.next_attempt += attempts.len() as u64;

        let channel = &self.channel;
        let trace = &mut self.trace;
        let mut on_air: Vec<usize> = Vec::new();
        let mut outcomes: Vec<Option<Vec<DeliveryOutcome>>> = vec![None; attempts.len()];
        let mut failure: Option<SimError> = None;

        self.sim.run_to_completion(|sim, ev| {
            let now = sim.now();
            match ev.action {
                Air::Start(i) => {
                    let a = &attempts[i];
                    trace.push(
                        now,
                        Some(a.sender),
                        TraceEvent::Tx {
                            attempt: base_id + i as u64,
                            dest: a.dest,
                            freq: a.freq_index(),
                            duration_us: a.duration().as_micros(),
                            frame: a.frame.kind.clone(),
                        },
                    );
                    on_air.push(i);
                }
                Air::End(i) => {
                    let a = &attempts[i];
                    let others: Vec<&TransmissionAttempt> =
                        on_air.iter().filter(|&&j| j != i).map(|&j| &attempts[j]).collect();
                    match channel.transmit(a, &others) {
                        Ok(out) => {
                            for o in &out {
                                trace.push(
                                    now,
                                    Some(o.receiver),
                                    TraceEvent::Rx {
                                        attempt: base_id + i as u64,
                                        sender: a.sender,
                                        status: o.status,
                                        snr_db: o.snr_db,
                                    },
                                );
                            }
                            outcomes[i] = Some(out);
                        }
                        Err(e) => {
                            failure.get_or_insert(e);
                            outcomes[i] = Some(Vec::new());
                        }
                    }
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(attempts
            .into_iter()
            .zip(outcomes)
            .enumerate()
            .map(|(i, (attempt, out))| AttemptResult { id: base_id + i as u64, attempt, outcomes: out.unwrap_or_default() })
            .collect())
    }

    /// One frame starting now.
    pub fn send(
        &mut self,
        from: NodeId,
        dest: Option<NodeId>,
        kind: FrameKind,
        duration: SimTime,
        freq: usize,
    ) -> Result<AttemptResult, SimError> {
        let a = TransmissionAttempt::new(from, dest, Frame::new(kind, duration, freq), self.now());
        Ok(self.exchange(vec![a])?.pop().expect("one attempt"))
    }

    /// Relays `kind` hop by hop along `path` (first element is the sender).
    /// Returns the SNR of the final hop on success, `None` if any hop fails.
    pub fn send_path(
        &mut self,
        path: &[NodeId],
        kind: &FrameKind,
        duration: SimTime,
        freqs: &LinkFreqs,
    ) -> Result<Option<f64>, SimError> {
        if path.len() < 2 {
            return Ok(Some(f64::INFINITY));
        }
        let mut last = None;
        for hop in path.windows(2) {
            let (from, to) = (hop[0], hop[1]);
            if !self.channel.topology.are_linked(from, to) {
                return Err(SimError::NoLink(from, to));
            }
            let r = self.send(from, Some(to), kind.clone(), duration, freqs.get(from, to))?;
            match r.delivered_to(to) {
                Some(snr) => last = Some(snr),
                None => return Ok(None),
            }
        }
        Ok(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{FrequencyPlan, SnrTable, Topology};

    fn medium(topo: Topology) -> Medium {
        let plan = FrequencyPlan::default();
        let snr = SnrTable::uniform(&topo, &plan, 20.0);
        Medium::new(Channel::new(topo, plan, snr, 10.0).unwrap(), 1)
    }

    #[test]
    fn derived_packet_duration() {
        assert_eq!(packet_duration_us(12, 1024, 64, 1.25e6), DEFAULT_PACKET_US);
    }

    #[test]
    fn pte_round_window() {
        let t = SlotTiming::default();
        assert_eq!(t.window_slots as u64 * t.preamble_slot_us, 56_320);
        assert_eq!(t.pte_round().as_micros(), 56_540);
    }

    #[test]
    fn exchange_orders_and_traces() {
        let mut m = medium(Topology::star(3));
        let f = |start| {
            TransmissionAttempt::new(NodeId(1), Some(NodeId(0)), Frame::new(FrameKind::Data, SimTime::from_micros(10), 0), SimTime::from_micros(start))
        };
        let res = m.exchange(vec![f(50), f(0)]).unwrap();
        assert_eq!(m.now().as_micros(), 60);
        assert!(res.iter().all(|r| r.delivered_to(NodeId(0)).is_some()));
        let starts: Vec<u64> = m
            .trace()
            .records()
            .iter()
            .filter(|r| r.event.label() == "tx")
            .map(|r| r.at.as_micros())
            .collect();
        assert_eq!(starts, vec![0, 50]);
    }

    #[test]
    fn send_path_multi_hop() {
        let mut m = medium(Topology::chain(4));
        let path = [NodeId(0), NodeId(1), NodeId(2), NodeId(3)];
        let ok = m.send_path(&path, &FrameKind::Poll, SimTime::from_micros(100), &LinkFreqs::new(0)).unwrap();
        assert_eq!(ok, Some(20.0));
        assert_eq!(m.now().as_micros(), 300);
        assert!(m.send_path(&[NodeId(0), NodeId(2)], &FrameKind::Poll, SimTime::from_micros(1), &LinkFreqs::new(0)).is_err());
    }
}
