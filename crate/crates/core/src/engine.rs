//! Deterministic discrete-event scheduler.
//!
//! Events are ordered by `(at, seq)` where `seq` is a per-simulation insertion
//! counter, so simultaneous events fire in the order they were scheduled.
//! Randomness comes from [`RngStream`]s, one per node, derived from the
//! scenario seed and a stream id.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Integer microseconds since simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(micros: u64) -> Self {
        SimTime(micros)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

/// Handle returned by [`Simulation::schedule`], usable for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

/// A scheduled action.
#[derive(Debug, Clone)]
pub struct SimEvent<A> {
    pub at: SimTime,
    pub seq: u64,
    pub action: A,
}

impl<A> PartialEq for SimEvent<A> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<A> Eq for SimEvent<A> {}

impl<A> PartialOrd for SimEvent<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for SimEvent<A> {
    // Reversed so that `BinaryHeap` pops the earliest (at, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Single-threaded event loop over actions of type `A`.
#[derive(Debug)]
pub struct Simulation<A> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<SimEvent<A>>,
    cancelled: HashSet<u64>,
    processed: u64,
}

impl<A> Default for Simulation<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> Simulation<A> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events processed so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    /// Enqueues `action` to fire at `at`. Scheduling before the current
    /// clock is a contract violation.
    pub fn schedule(&mut self, at: SimTime, action: A) -> Result<EventHandle, SimError> {
        if at < self.now {
            return Err(SimError::ScheduleInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(SimEvent { at, seq, action });
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(&mut self, delay: SimTime, action: A) -> Result<EventHandle, SimError> {
        self.schedule(self.now + delay, action)
    }

    /// Cancels a pending event. Returns false if it already fired or was
    /// cancelled before.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if !self.queue.iter().any(|e| e.seq == handle.0) {
            return false;
        }
        self.cancelled.insert(handle.0)
    }

    /// Pops the next live event and advances the clock to it.
    pub fn step(&mut self) -> Option<SimEvent<A>> {
        while let Some(ev) = self.queue.pop() {
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            debug_assert!(ev.at >= self.now);
            self.now = ev.at;
            self.processed += 1;
            return Some(ev);
        }
        None
    }

    /// Processes events in `(at, seq)` order until the queue is empty. The
    /// handler may schedule further events. Returns the clock after the last
    /// processed event.
    pub fn run_to_completion<F>(&mut self, mut handler: F) -> SimTime
    where
        F: FnMut(&mut Self, SimEvent<A>),
    {
        while let Some(ev) = self.step() {
            handler(self, ev);
        }
        self.now
    }

    /// Moves the clock forward with no event processing. The queue must not
    /// hold events earlier than `to`.
    pub fn advance_to(&mut self, to: SimTime) -> Result<(), SimError> {
        if to < self.now {
            return Err(SimError::ScheduleInPast { at: to, now: self.now });
        }
        if let Some(first) = self.queue.iter().filter(|e| !self.cancelled.contains(&e.seq)).map(|e| e.at).min() {
            if first < to {
                return Err(SimError::Contract(format!(
                    "cannot advance clock to {to}: pending event at {first}"
                )));
            }
        }
        self.now = to;
        Ok(())
    }
}

/// Reproducible random stream identified by `(seed, stream_id)`.
///
/// Streams with distinct ids are independent, so adding a node never perturbs
/// the draws of existing nodes.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn draw_uniform(&mut self, lo: i64, hi: i64) -> Result<i64, SimError> {
        if lo > hi {
            return Err(SimError::Contract(format!("draw_uniform: lo {lo} > hi {hi}")));
        }
        Ok(self.rng.gen_range(lo..=hi))
    }

    /// Uniform real in `[lo, hi)`; `lo == hi` returns `lo`.
    pub fn draw_real(&mut self, lo: f64, hi: f64) -> Result<f64, SimError> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(SimError::Contract(format!("draw_real: bad range [{lo}, {hi})")));
        }
        if lo == hi {
            return Ok(lo);
        }
        Ok(self.rng.gen_range(lo..hi))
    }
}
