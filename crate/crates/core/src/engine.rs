//! Deterministic discrete-event core.
//!
//! The clock is an integer count of nanoseconds. Events are ordered by
//! `(fire_at, seq)` where `seq` is a monotone insertion counter, so two
//! events scheduled for the same instant are dispatched in the order they
//! were scheduled. Nothing in here depends on hash ordering or wall time.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Simulated time (or a duration) in integer nanoseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    /// Rounds to the nearest nanosecond; negative inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * 1e9).round().max(0.0) as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn as_micros_f64(self) -> f64 {
        self.0 as f64 * 1e-3
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 = self.0.saturating_add(rhs.0);
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ns = self.0;
        if ns >= 1_000_000 {
            write!(f, "{:.3}ms", ns as f64 / 1e6)
        } else if ns >= 1_000 {
            write!(f, "{:.3}us", ns as f64 / 1e3)
        } else {
            write!(f, "{ns}ns")
        }
    }
}

/// A scheduled event. `seq` is assigned by the queue.
#[derive(Debug, Clone)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: P,
}

struct Entry<P>(Event<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.fire_at == other.0.fire_at && self.0.seq == other.0.seq
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert so the earliest (fire_at, seq) pops first.
        other
            .0
            .fire_at
            .cmp(&self.0.fire_at)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

/// Attempt to schedule an event before the current clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("causality violation: event at {fire_at} scheduled while clock is {now}")]
pub struct CausalityError {
    pub now: SimTime,
    pub fire_at: SimTime,
}

pub struct EventQueue<P> {
    now: SimTime,
    heap: BinaryHeap<Entry<P>>,
    next_seq: u64,
    dispatched: u64,
    halted: bool,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            heap: BinaryHeap::new(),
            next_seq: 0,
            dispatched: 0,
            halted: false,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: P) -> Result<(), CausalityError> {
        if fire_at < self.now {
            return Err(CausalityError {
                now: self.now,
                fire_at,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(Event {
            fire_at,
            seq,
            payload,
        }));
        Ok(())
    }

    /// Schedules `delay` after the current clock; can never violate causality.
    pub fn schedule_in(&mut self, delay: SimTime, payload: P) {
        let at = self.now + delay;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(Event {
            fire_at: at,
            seq,
            payload,
        }));
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn scheduled_count(&self) -> u64 {
        self.next_seq
    }

    pub fn dispatched_count(&self) -> u64 {
        self.dispatched
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.0.fire_at)
    }

    /// Stops the surrounding `run_until` after the current handler returns.
    pub fn halt(&mut self) {
        self.halted = true;
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Pops the next event with `fire_at <= end`, advancing the clock to it.
    pub fn pop_until(&mut self, end: SimTime) -> Option<Event<P>> {
        match self.heap.peek() {
            Some(e) if e.0.fire_at <= end => {}
            _ => return None,
        }
        let Entry(ev) = self.heap.pop()?;
        debug_assert!(ev.fire_at >= self.now);
        self.now = ev.fire_at;
        self.dispatched += 1;
        Some(ev)
    }

    /// Dispatches every event with `fire_at <= end` in `(fire_at, seq)` order.
    ///
    /// Returns the final clock: `end` when the horizon is reached (including
    /// the empty-queue case), or the time of the halting event if a handler
    /// called [`EventQueue::halt`]. Handler errors abort the run.
    pub fn run_until<E, F>(&mut self, end: SimTime, mut handler: F) -> Result<SimTime, E>
    where
        F: FnMut(&mut Self, Event<P>) -> Result<(), E>,
    {
        assert!(end >= self.now, "run_until end {end} is before clock {}", self.now);
        self.halted = false;
        while let Some(ev) = self.pop_until(end) {
            handler(self, ev)?;
            if self.halted {
                return Ok(self.now);
            }
        }
        self.now = end;
        Ok(end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_delays_are_exact() {
        assert_eq!(SimTime::from_micros(1).as_nanos(), 1_000);
        assert_eq!(SimTime::from_millis(5).as_nanos(), 5_000_000);
    }

    #[test]
    fn now_event_precedes_later_event() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(1), "later").unwrap();
        q.schedule(SimTime(0), "now").unwrap();
        let mut seen = Vec::new();
        q.run_until(SimTime(10), |_, ev| {
            seen.push(ev.payload);
            Ok::<_, ()>(())
        })
        .unwrap();
        assert_eq!(seen, vec!["now", "later"]);
    }

    #[test]
    fn ties_dispatch_in_insertion_order() {
        let mut q = EventQueue::new();
        for i in 0..100u32 {
            q.schedule(SimTime(7), i).unwrap();
        }
        let mut seen = Vec::new();
        q.run_until(SimTime(7), |_, ev| {
            seen.push(ev.payload);
            Ok::<_, ()>(())
        })
        .unwrap();
        assert_eq!(seen, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn past_schedule_is_rejected() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(5), ()).unwrap();
        q.run_until(SimTime(5), |_, _| Ok::<_, ()>(())).unwrap();
        let err = q.schedule(SimTime(4), ()).unwrap_err();
        assert_eq!(err.now, SimTime(5));
        assert_eq!(err.fire_at, SimTime(4));
    }

    #[test]
    fn empty_queue_returns_end() {
        let mut q: EventQueue<()> = EventQueue::new();
        let mut n = 0;
        let t = q
            .run_until(SimTime::from_millis(10), |_, _| {
                n += 1;
                Ok::<_, ()>(())
            })
            .unwrap();
        assert_eq!(t, SimTime::from_millis(10));
        assert_eq!(n, 0);
    }

    #[test]
    fn single_event_dispatched_at_its_time() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_millis(5), ()).unwrap();
        let mut at = None;
        let end = q
            .run_until(SimTime::from_millis(10), |q, _| {
                at = Some(q.now());
                Ok::<_, ()>(())
            })
            .unwrap();
        assert_eq!(at, Some(SimTime::from_millis(5)));
        assert_eq!(end, SimTime::from_millis(10));
    }

    #[test]
    fn clock_never_exceeds_end() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(20), ()).unwrap();
        let t = q.run_until(SimTime(10), |_, _| Ok::<_, ()>(())).unwrap();
        assert_eq!(t, SimTime(10));
        assert_eq!(q.pending(), 1);
    }

    #[test]
    fn halt_stops_at_current_event() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(3), 1).unwrap();
        q.schedule(SimTime(4), 2).unwrap();
        let t = q
            .run_until(SimTime(100), |q, ev| {
                if ev.payload == 1 {
                    q.halt();
                }
                Ok::<_, ()>(())
            })
            .unwrap();
        assert_eq!(t, SimTime(3));
        assert_eq!(q.pending(), 1);
    }
}
