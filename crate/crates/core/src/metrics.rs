//! Per-loop traces and run summaries.

use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use crate::medium::LossCounters;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OutputRow {
    pub t: f64,
    pub r: f64,
    pub y: f64,
    pub u: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeriodRow {
    pub t: f64,
    pub h: f64,
}

/// Miss ratio measured over `[start, t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DmrRow {
    pub start: f64,
    pub t: f64,
    pub rho: f64,
    pub rho_filtered: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoopTrace {
    pub loop_id: u32,
    pub outputs: Vec<OutputRow>,
    pub periods: Vec<PeriodRow>,
    pub dmr: Vec<DmrRow>,
    pub losses: LossCounters,
    pub diverged: bool,
    pub max_abs_y: f64,
    pub commands_applied: u64,
    pub commands_late: u64,
    /// Sum of sample-release to actuation delays, seconds.
    pub round_trip_total: f64,
    pub round_trip_max: f64,
}

impl LoopTrace {
    pub fn new(loop_id: u32) -> Self {
        LoopTrace {
            loop_id,
            ..LoopTrace::default()
        }
    }

    /// Appends a row. A second row at the same instant replaces the first so
    /// timestamps stay strictly increasing.
    pub fn record_output(&mut self, t: f64, r: f64, y: f64, u: f64) {
        let row = OutputRow { t, r, y, u };
        if y.is_finite() {
            self.max_abs_y = self.max_abs_y.max(y.abs());
        }
        match self.outputs.last_mut() {
            Some(last) if last.t == t => *last = row,
            Some(last) => {
                debug_assert!(t > last.t, "output rows out of order");
                self.outputs.push(row);
            }
            None => self.outputs.push(row),
        }
    }

    pub fn record_period(&mut self, t: f64, h: f64) {
        match self.periods.last_mut() {
            Some(last) if last.t == t => last.h = h,
            _ => self.periods.push(PeriodRow { t, h }),
        }
    }

    pub fn record_dmr(&mut self, start: f64, t: f64, rho: f64, rho_filtered: f64) {
        self.dmr.push(DmrRow {
            start,
            t,
            rho,
            rho_filtered,
        });
    }

    pub fn iae(&self) -> f64 {
        iae(&self.outputs)
    }

    pub fn record_actuation(&mut self, round_trip: f64, on_time: bool) {
        self.commands_applied += 1;
        if !on_time {
            self.commands_late += 1;
        }
        self.round_trip_total += round_trip;
        self.round_trip_max = self.round_trip_max.max(round_trip);
    }

    pub fn mean_round_trip(&self) -> f64 {
        if self.commands_applied == 0 {
            0.0
        } else {
            self.round_trip_total / self.commands_applied as f64
        }
    }

    pub fn iae_between(&self, t0: f64, t1: f64) -> f64 {
        iae_between(&self.outputs, t0, t1)
    }

    /// Mean measured miss ratio over all adaptation intervals; zero if none.
    pub fn mean_dmr(&self) -> f64 {
        if self.dmr.is_empty() {
            return 0.0;
        }
        self.dmr.iter().map(|d| d.rho).sum::<f64>() / self.dmr.len() as f64
    }

    /// Mean measured miss ratio over the intervals lying inside `[t0, t1]`.
    pub fn mean_dmr_between(&self, t0: f64, t1: f64) -> Option<f64> {
        let tol = 1e-9;
        let rows: Vec<f64> = self
            .dmr
            .iter()
            .filter(|d| d.start >= t0 - tol && d.t <= t1 + tol)
            .map(|d| d.rho)
            .collect();
        if rows.is_empty() {
            None
        } else {
            Some(rows.iter().sum::<f64>() / rows.len() as f64)
        }
    }

    /// Row at or just before `t`.
    pub fn output_at(&self, t: f64) -> Option<&OutputRow> {
        let idx = self.outputs.partition_point(|row| row.t <= t);
        idx.checked_sub(1).map(|i| &self.outputs[i])
    }
}

/// Trapezoidal integral of `|r - y|` over the recorded support.
pub fn iae(rows: &[OutputRow]) -> f64 {
    rows.windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * ((w[0].r - w[0].y).abs() + (w[1].r - w[1].y).abs()))
        .sum()
}

/// As [`iae`], restricted to `[t0, t1]` with linear interpolation of the
/// error inside clipped segments.
pub fn iae_between(rows: &[OutputRow], t0: f64, t1: f64) -> f64 {
    let mut total = 0.0;
    for w in rows.windows(2) {
        let (a, b) = (w[0], w[1]);
        let lo = a.t.max(t0);
        let hi = b.t.min(t1);
        if hi <= lo {
            continue;
        }
        let (ea, eb) = ((a.r - a.y).abs(), (b.r - b.y).abs());
        let at = |t: f64| ea + (eb - ea) * (t - a.t) / (b.t - a.t);
        total += 0.5 * (hi - lo) * (at(lo) + at(hi));
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LoopSummary {
    pub loop_id: u32,
    pub iae: f64,
    pub mean_dmr: f64,
    pub max_abs_y: f64,
    pub diverged: bool,
    pub commands_applied: u64,
    pub commands_late: u64,
    pub mean_round_trip: f64,
    pub max_round_trip: f64,
    pub losses: LossCounters,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelSummary {
    pub busy_fraction: f64,
    pub offered: u64,
    pub delivered: u64,
    pub collision: u64,
    pub access_failure: u64,
    pub random_loss: u64,
    pub queue_overflow: u64,
    /// Still queued or on air when the run ended.
    pub outstanding: u64,
}

impl ChannelSummary {
    pub fn from_counters(c: &LossCounters, busy_fraction: f64) -> Self {
        ChannelSummary {
            busy_fraction,
            offered: c.offered,
            delivered: c.delivered,
            collision: c.collision,
            access_failure: c.access_failure,
            random_loss: c.random_loss,
            queue_overflow: c.queue_overflow,
            outstanding: c.outstanding(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub scheme: String,
    pub seed: u64,
    pub duration: f64,
    pub loops: Vec<LoopSummary>,
    pub channel: ChannelSummary,
}

impl Summary {
    pub fn total_iae(&self) -> f64 {
        self.loops.iter().map(|l| l.iae).sum()
    }
}
