//! Per-loop node state: time-triggered smart sensor, event-triggered
//! controller (see [`crate::pid`]), deadline-checking actuator, plus the
//! periodic interferers that share the channel.

use serde::{Deserialize, Serialize};

use crate::engine::NodeId;
use crate::sampler::SamplerState;
use crate::time::SimTime;

pub use crate::pid::ControllerState;

/// Square-wave reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSpec {
    pub wave_period: f64,
    pub amplitude_high: f64,
    pub amplitude_low: f64,
    pub phase: f64,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec {
            wave_period: 4.0,
            amplitude_high: 1.0,
            amplitude_low: 0.0,
            phase: 0.0,
        }
    }
}

impl ReferenceSpec {
    /// High for the first half of each wave period, counted from `phase`.
    pub fn value_at(&self, t: f64) -> f64 {
        let mut x = libm::fmod(t - self.phase, self.wave_period);
        if x < 0.0 {
            x += self.wave_period;
        }
        if x < self.wave_period / 2.0 {
            self.amplitude_high
        } else {
            self.amplitude_low
        }
    }
}

/// Node roles, used to derive a random stream that depends only on a node's
/// identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Sensor,
    Controller,
    Actuator,
    Interferer,
    Sink,
}

impl Role {
    pub fn stream(self, id: u32) -> u64 {
        let tag: u64 = match self {
            Role::Sensor => 1,
            Role::Controller => 2,
            Role::Actuator => 3,
            Role::Interferer => 4,
            Role::Sink => 5,
        };
        tag << 32 | u64::from(id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Fixed sampling period.
    #[serde(rename = "TT", alias = "tt")]
    Tt,
    /// Period adapted from the deadline miss ratio.
    #[serde(rename = "FTT", alias = "ftt")]
    Ftt,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Tt => "tt",
            Scheme::Ftt => "ftt",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SensorState {
    pub node: NodeId,
    pub loop_id: u32,
    pub scheme: Scheme,
    pub active: bool,
    /// Bumped on every activation so stale periodic events can be ignored.
    pub epoch: u32,
    /// Samples released since the last adaptation tick.
    pub periods_count: u64,
    /// On-time reports received since the last adaptation tick.
    pub success_count: u64,
    pub sampler: SamplerState,
}

impl SensorState {
    pub fn new(node: NodeId, loop_id: u32, scheme: Scheme, initial_h: f64) -> Self {
        SensorState {
            node,
            loop_id,
            scheme,
            active: false,
            epoch: 0,
            periods_count: 0,
            success_count: 0,
            sampler: SamplerState::new(initial_h),
        }
    }

    /// Current sampling period, seconds.
    pub fn h(&self) -> f64 {
        self.sampler.h
    }

    pub fn h_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.sampler.h)
    }

    pub fn activate(&mut self) -> u32 {
        self.active = true;
        self.epoch += 1;
        self.periods_count = 0;
        self.success_count = 0;
        self.epoch
    }

    pub fn deactivate(&mut self) {
        self.active = false;
    }

    /// Counts one released sample and returns the period it carries.
    pub fn release(&mut self) -> f64 {
        self.periods_count += 1;
        self.sampler.h
    }

    pub fn on_report(&mut self) {
        self.success_count += 1;
    }

    pub fn take_counters(&mut self) -> (u64, u64) {
        let counts = (self.periods_count, self.success_count);
        self.periods_count = 0;
        self.success_count = 0;
        counts
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ActuatorState {
    pub last_applied_u: f64,
    pub applied: u64,
    pub late: u64,
}

impl ActuatorState {
    /// Records a command arriving at `t` and returns whether it met its
    /// deadline. The boundary is inclusive. Late commands are still applied.
    pub fn on_command(&mut self, u: f64, deadline: SimTime, t: SimTime) -> bool {
        self.last_applied_u = u;
        self.applied += 1;
        let on_time = t <= deadline;
        if !on_time {
            self.late += 1;
        }
        on_time
    }
}

#[derive(Clone, Debug)]
pub struct InterfererState {
    pub node: NodeId,
    pub peer: NodeId,
    pub period: SimTime,
    pub packet_bytes: u32,
    pub start: SimTime,
    pub end: SimTime,
    pub sent: u64,
}

impl InterfererState {
    pub fn in_window(&self, t: SimTime) -> bool {
        t >= self.start && t < self.end
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_wave() {
        let r = ReferenceSpec::default();
        assert_eq!(r.value_at(0.0), 1.0);
        assert_eq!(r.value_at(1.999), 1.0);
        assert_eq!(r.value_at(2.0), 0.0);
        assert_eq!(r.value_at(3.5), 0.0);
        assert_eq!(r.value_at(4.0), 1.0);
        assert_eq!(r.value_at(-1.0), 0.0);
        let shifted = ReferenceSpec {
            phase: 1.0,
            amplitude_low: -1.0,
            ..r
        };
        assert_eq!(shifted.value_at(0.5), -1.0);
        assert_eq!(shifted.value_at(1.0), 1.0);
    }

    #[test]
    fn deadline_is_inclusive() {
        let mut a = ActuatorState::default();
        let d = SimTime::from_micros(10_000);
        assert!(a.on_command(1.0, d, d));
        assert!(!a.on_command(2.0, d, d + SimTime::from_micros(1)));
        assert_eq!(a.last_applied_u, 2.0);
        assert_eq!((a.applied, a.late), (2, 1));
    }

    #[test]
    fn activation_resets_counters() {
        let mut s = SensorState::new(NodeId(0), 1, Scheme::Ftt, 0.01);
        assert_eq!(s.activate(), 1);
        s.release();
        s.on_report();
        assert_eq!(s.take_counters(), (1, 1));
        s.release();
        s.deactivate();
        assert_eq!(s.activate(), 2);
        assert_eq!(s.take_counters(), (0, 0));
    }

    #[test]
    fn streams_are_distinct_per_role() {
        assert_ne!(Role::Sensor.stream(1), Role::Controller.stream(1));
        assert_ne!(Role::Sensor.stream(1), Role::Sensor.stream(2));
    }

    #[test]
    fn interferer_window_is_half_open() {
        let i = InterfererState {
            node: NodeId(0),
            peer: NodeId(1),
            period: SimTime::from_micros(10_000),
            packet_bytes: 32,
            start: SimTime::from_secs_f64(6.0),
            end: SimTime::from_secs_f64(12.0),
            sent: 0,
        };
        assert!(i.in_window(SimTime::from_secs_f64(6.0)));
        assert!(!i.in_window(SimTime::from_secs_f64(12.0)));
        assert!(!i.in_window(SimTime::from_secs_f64(5.99)));
    }
}
