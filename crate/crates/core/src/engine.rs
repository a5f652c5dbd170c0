//! Discrete-event core: simulation clock, pending-event queue and the
//! per-run random source.
//!
//! Time is kept as integer nanoseconds so that periodic sources produce
//! exact arithmetic sequences and event ordering never depends on
//! floating-point rounding. Ties on fire time are broken by insertion
//! sequence, which makes `(fire_time, sequence)` a strict total order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const NANOS_PER_SEC: f64 = 1e9;

/// A point on the simulated time axis, in nanoseconds since the start of
/// the run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(nanos: u64) -> Self {
        SimTime(nanos)
    }

    /// Converts seconds to the nearest nanosecond. Negative and NaN inputs
    /// saturate to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs.is_nan() || secs <= 0.0 {
            return SimTime::ZERO;
        }
        let nanos = (secs * NANOS_PER_SEC).round();
        if nanos >= u64::MAX as f64 {
            SimTime::MAX
        } else {
            SimTime(nanos as u64)
        }
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

/// A non-negative span of simulated time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimDuration(u64);

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub const fn from_nanos(nanos: u64) -> Self {
        SimDuration(nanos)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        SimDuration(SimTime::from_secs_f64(secs).0)
    }

    /// Time needed to serialize `bits` onto a link of `bps` capacity.
    /// An infinite capacity yields zero.
    pub fn transmission(bits: u64, bps: f64) -> Self {
        if bps.is_infinite() {
            return SimDuration::ZERO;
        }
        Self::from_secs_f64(bits as f64 / bps)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC
    }

    pub fn saturating_mul(self, k: u64) -> SimDuration {
        SimDuration(self.0.saturating_mul(k))
    }
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Add for SimDuration {
    type Output = SimDuration;

    fn add(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0.saturating_add(rhs.0))
    }
}

impl Sub for SimTime {
    type Output = SimDuration;

    fn sub(self, rhs: SimTime) -> SimDuration {
        SimDuration(self.0.saturating_sub(rhs.0))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("cannot schedule event at {at} before current clock {now}")]
    ScheduleInPast { now: SimTime, at: SimTime },
    #[error("cannot run backwards to {target} from current clock {now}")]
    RunBackwards { now: SimTime, target: SimTime },
    #[error("random index requested from an empty range")]
    EmptyRange,
}

/// A scheduled occurrence carrying a caller-defined payload.
#[derive(Debug, Clone)]
pub struct Event<E> {
    pub fire_time: SimTime,
    pub sequence: u64,
    pub payload: E,
}

impl<E> PartialEq for Event<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_time == other.fire_time && self.sequence == other.sequence
    }
}

impl<E> Eq for Event<E> {}

impl<E> PartialOrd for Event<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Event<E> {
    // Reversed so that `BinaryHeap` pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_time
            .cmp(&self.fire_time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// Pending-event set plus the simulation clock.
#[derive(Debug)]
pub struct EventQueue<E> {
    now: SimTime,
    next_sequence: u64,
    heap: BinaryHeap<Event<E>>,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            now: SimTime::ZERO,
            next_sequence: 0,
            heap: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Inserts an event and returns its tie-breaking sequence number.
    pub fn schedule(&mut self, at: SimTime, payload: E) -> Result<u64, EngineError> {
        if at < self.now {
            return Err(EngineError::ScheduleInPast { now: self.now, at });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Event {
            fire_time: at,
            sequence,
            payload,
        });
        Ok(sequence)
    }

    /// Schedules `delay` after the current clock. Never fails.
    pub fn schedule_in(&mut self, delay: SimDuration, payload: E) -> u64 {
        let at = self.now + delay;
        self.schedule(at, payload)
            .expect("a non-negative delay never lands in the past")
    }

    /// Earliest pending event, if any.
    pub fn peek(&self) -> Option<&Event<E>> {
        self.heap.peek()
    }

    /// Removes the next event if it fires no later than `limit`, advancing
    /// the clock to its fire time.
    pub fn pop_until(&mut self, limit: SimTime) -> Option<Event<E>> {
        if self.heap.peek()?.fire_time > limit {
            return None;
        }
        let event = self.heap.pop()?;
        debug_assert!(event.fire_time >= self.now);
        self.now = event.fire_time;
        Some(event)
    }

    /// Dispatches, in `(fire_time, sequence)` order, every event firing at
    /// or before `t_end`, including those scheduled by the handler itself.
    /// On return the clock reads `t_end`.
    pub fn run_until<F, Err>(&mut self, t_end: SimTime, mut handler: F) -> Result<(), Err>
    where
        F: FnMut(&mut Self, Event<E>) -> Result<(), Err>,
        Err: From<EngineError>,
    {
        if t_end < self.now {
            return Err(EngineError::RunBackwards {
                now: self.now,
                target: t_end,
            }
            .into());
        }
        while let Some(event) = self.pop_until(t_end) {
            handler(self, event)?;
        }
        self.now = t_end;
        Ok(())
    }

    /// Unordered view of the pending events.
    pub fn pending(&self) -> impl Iterator<Item = &Event<E>> {
        self.heap.iter()
    }
}

/// The single random source of one simulation run (ChaCha8, seeded from a
/// 64-bit value). Every stochastic decision draws from it in dispatch
/// order, so a run is a pure function of its scenario and seed.
#[derive(Debug, Clone)]
pub struct SimRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: usize) -> Result<usize, EngineError> {
        if n == 0 {
            return Err(EngineError::EmptyRange);
        }
        Ok(self.inner.random_range(0..n))
    }

    /// Uniform real in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// True with probability `p` (clamped to `[0, 1]`).
    pub fn chance(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            return false;
        }
        if p >= 1.0 {
            return true;
        }
        self.unit() < p
    }

    /// Draws `k` distinct values uniformly from `[0, n)` in draw order.
    /// `k` is clamped to `n`.
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        rand::seq::index::sample(&mut self.inner, n, k).into_vec()
    }

    pub(crate) fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}
