//! Event queue and simulated clock.
//!
//! Events are totally ordered by `(fire_at, seq)`, where `seq` is a counter
//! assigned at insertion. Two events due at the same instant are therefore
//! dispatched in the order they were scheduled, and a run is a deterministic
//! function of its inputs.

use alloc::collections::BinaryHeap;
use core::cmp::Ordering;
use core::fmt;

use crate::time::SimTime;

/// Identifies a node (sensor, controller, actuator, interferer, sink).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("event scheduled at {at} but the clock already reads {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },
    #[error("run_until({t_end}) called with the clock at {now}")]
    RunIntoPast { t_end: SimTime, now: SimTime },
}

#[derive(Clone, Debug)]
pub struct Event<K> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: NodeId,
    pub kind: K,
}

impl<K> PartialEq for Event<K> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<K> Eq for Event<K> {}

impl<K> Ord for Event<K> {
    // Reversed so that the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at
            .cmp(&self.fire_at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl<K> PartialOrd for Event<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pending events, ordered by `(fire_at, seq)`.
#[derive(Debug)]
pub struct EventQueue<K> {
    pending: BinaryHeap<Event<K>>,
    next_seq: u64,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        EventQueue {
            pending: BinaryHeap::new(),
            next_seq: 0,
        }
    }

    /// Inserts an event and returns the sequence number it was given.
    pub fn push(&mut self, fire_at: SimTime, target: NodeId, kind: K) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.push(Event {
            fire_at,
            seq,
            target,
            kind,
        });
        seq
    }

    pub fn pop(&mut self) -> Option<Event<K>> {
        self.pending.pop()
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.pending.peek().map(|e| e.fire_at)
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Simulated clock plus event queue.
#[derive(Debug)]
pub struct Engine<K> {
    now: SimTime,
    queue: EventQueue<K>,
    dispatched: u64,
    digest: u64,
}

impl<K> Default for Engine<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> Engine<K> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            queue: EventQueue::new(),
            dispatched: 0,
            digest: FNV_OFFSET,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn schedule(&mut self, at: SimTime, target: NodeId, kind: K) -> Result<u64, EngineError> {
        if at < self.now {
            return Err(EngineError::ScheduleInPast { at, now: self.now });
        }
        Ok(self.queue.push(at, target, kind))
    }

    /// Schedules `delay` after the current instant.
    pub fn schedule_in(&mut self, delay: SimTime, target: NodeId, kind: K) -> u64 {
        self.queue.push(self.now + delay, target, kind)
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Number of events dispatched so far.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// FNV-1a fingerprint of the dispatch sequence `(fire_at, seq, target)`.
    /// Two runs with equal digests dispatched the same events in the same order.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    /// Dispatches every event with `fire_at <= t_end` in order, then leaves the
    /// clock at `t_end`. Stops at the first handler error.
    pub fn run_until<E, F>(&mut self, t_end: SimTime, mut handler: F) -> Result<(), E>
    where
        E: From<EngineError>,
        F: FnMut(&mut Engine<K>, Event<K>) -> Result<(), E>,
    {
        if t_end < self.now {
            return Err(EngineError::RunIntoPast {
                t_end,
                now: self.now,
            }
            .into());
        }
        while let Some(t) = self.queue.peek_time() {
            if t > t_end {
                break;
            }
            let event = self.queue.pop().expect("peeked");
            debug_assert!(event.fire_at >= self.now);
            self.now = event.fire_at;
            self.dispatched += 1;
            self.mix(event.fire_at.as_micros());
            self.mix(event.seq);
            self.mix(u64::from(event.target.0));
            handler(self, event)?;
        }
        self.now = t_end;
        Ok(())
    }

    fn mix(&mut self, word: u64) {
        for byte in word.to_le_bytes() {
            self.digest ^= u64::from(byte);
            self.digest = self.digest.wrapping_mul(FNV_PRIME);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn us(v: u64) -> SimTime {
        SimTime::from_micros(v)
    }

    fn drain(engine: &mut Engine<u32>, t_end: SimTime) -> Vec<(u64, u32)> {
        let mut seen = Vec::new();
        engine
            .run_until::<EngineError, _>(t_end, |eng, ev| {
                seen.push((eng.now().as_micros(), ev.kind));
                Ok(())
            })
            .unwrap();
        seen
    }

    #[test]
    fn same_instant_fires_before_later_instant() {
        let mut eng = Engine::new();
        eng.schedule(us(1), NodeId(0), 1).unwrap();
        eng.schedule(us(0), NodeId(0), 0).unwrap();
        assert_eq!(drain(&mut eng, us(10)), [(0, 0), (1, 1)]);
    }

    #[test]
    fn ties_break_by_insertion_order() {
        let mut eng = Engine::new();
        for k in 0..5 {
            eng.schedule(us(7), NodeId(k), k).unwrap();
        }
        let order: Vec<u32> = drain(&mut eng, us(7)).into_iter().map(|(_, k)| k).collect();
        assert_eq!(order, [0, 1, 2, 3, 4]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut eng: Engine<u32> = Engine::new();
        drain(&mut eng, us(100));
        assert_eq!(
            eng.schedule(us(99), NodeId(0), 0),
            Err(EngineError::ScheduleInPast {
                at: us(99),
                now: us(100)
            })
        );
        assert!(eng.schedule(us(100), NodeId(0), 0).is_ok());
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut eng: Engine<u32> = Engine::new();
        assert!(drain(&mut eng, SimTime::from_secs_f64(10.0)).is_empty());
        assert_eq!(eng.now(), SimTime::from_secs_f64(10.0));
    }

    #[test]
    fn run_until_stops_at_horizon() {
        let mut eng = Engine::new();
        let s1 = SimTime::from_secs_f64(1.0);
        eng.schedule(s1, NodeId(0), 10).unwrap();
        eng.schedule(SimTime::from_secs_f64(2.0), NodeId(0), 30)
            .unwrap();
        eng.schedule(s1, NodeId(0), 20).unwrap();
        let seen = drain(&mut eng, SimTime::from_secs_f64(1.5));
        assert_eq!(seen, [(1_000_000, 10), (1_000_000, 20)]);
        assert_eq!(eng.now(), SimTime::from_secs_f64(1.5));
        assert_eq!(eng.pending(), 1);
    }

    #[test]
    fn run_into_past_is_rejected() {
        let mut eng: Engine<u32> = Engine::new();
        drain(&mut eng, us(5));
        let err = eng
            .run_until::<EngineError, _>(us(4), |_, _| Ok(()))
            .unwrap_err();
        assert!(matches!(err, EngineError::RunIntoPast { .. }));
    }

    #[test]
    fn handler_may_schedule_at_now() {
        let mut eng = Engine::new();
        eng.schedule(us(3), NodeId(0), 0).unwrap();
        let mut seen = Vec::new();
        eng.run_until::<EngineError, _>(us(10), |eng, ev| {
            seen.push((eng.now().as_micros(), ev.kind));
            if ev.kind < 3 {
                eng.schedule(eng.now(), NodeId(0), ev.kind + 1)?;
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, [(3, 0), (3, 1), (3, 2), (3, 3)]);
    }

    #[test]
    fn digest_tracks_dispatch_order() {
        let build = |swap: bool| {
            let mut eng = Engine::new();
            let (a, b) = if swap { (1, 0) } else { (0, 1) };
            eng.schedule(us(1), NodeId(a), 0).unwrap();
            eng.schedule(us(1), NodeId(b), 0).unwrap();
            drain(&mut eng, us(2));
            eng.digest()
        };
        assert_eq!(build(false), build(false));
        assert_ne!(build(false), build(true));
    }
}
