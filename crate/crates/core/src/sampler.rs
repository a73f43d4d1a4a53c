//! Sampling-period adaptation on deadline miss ratio.
//!
//! Every `t_spa` seconds each smart sensor measures the fraction of its
//! samples whose control command missed the deadline, low-pass filters the
//! measurement, and runs an incremental PID law on the error to move its
//! sampling period:
//!
//! ```text
//! e(j)  = rho_ref - (lambda * rho(j) + (1 - lambda) * rho(j-1))
//! dh(j) = kp (e(j) - e(j-1)) + ki e(j) + kd (e(j) - 2 e(j-1) + e(j-2))
//! h(j)  = clamp(h(j-1) - dh(j), h_min, h_max)
//! ```
//!
//! A miss ratio above target makes `e` negative, so `dh` is negative and the
//! period grows, shedding load from the channel. Below target the period
//! shrinks. Loops adapt independently; nothing is shared between sensors.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerParams {
    /// Seconds of period per unit of miss-ratio error.
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Target miss ratio.
    pub rho_ref: f64,
    /// Weight of the newest measurement in the error filter, in (0, 1].
    pub lambda: f64,
    /// Seconds between adaptations.
    pub t_spa: f64,
    pub h_max: f64,
    pub h_min: f64,
}

impl Default for SamplerParams {
    fn default() -> Self {
        SamplerParams {
            kp: 0.007,
            ki: 0.006,
            kd: 0.003,
            rho_ref: 0.10,
            lambda: 0.7,
            t_spa: 0.5,
            h_max: 0.030,
            h_min: 0.002,
        }
    }
}

impl SamplerParams {
    pub fn check(&self) -> Result<(), (&'static str, &'static str)> {
        for (name, v) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            if !v.is_finite() {
                return Err((name, "must be finite"));
            }
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(("lambda", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.rho_ref) {
            return Err(("rho_ref", "must lie in [0, 1]"));
        }
        if !(self.t_spa > 0.0 && self.t_spa.is_finite()) {
            return Err(("t_spa", "must be positive"));
        }
        if !(self.h_min > 0.0) {
            return Err(("h_min", "must be positive"));
        }
        if !(self.h_max > self.h_min && self.h_max.is_finite()) {
            return Err(("h_max", "must exceed h_min"));
        }
        Ok(())
    }
}

/// Adaptation memory for one sensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerState {
    /// e(j-1)
    pub e_prev: f64,
    /// e(j-2)
    pub e_prev2: f64,
    /// rho(j-1)
    pub rho_prev: f64,
    /// Current sampling period, seconds.
    pub h: f64,
    /// Invocations so far.
    pub j: u64,
}

/// What one adaptation step saw and decided.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adaptation {
    pub rho: f64,
    pub rho_filtered: f64,
    pub error: f64,
    pub h: f64,
}

impl SamplerState {
    pub fn new(initial_h: f64) -> Self {
        SamplerState {
            e_prev: 0.0,
            e_prev2: 0.0,
            rho_prev: 0.0,
            h: initial_h,
            j: 0,
        }
    }

    /// Miss ratio over an interval with `periods` released samples and
    /// `successes` on-time reports. An empty interval repeats the previous
    /// measurement. Reports for samples released in the previous interval
    /// can push `successes` past `periods`; the result is clamped to [0, 1].
    pub fn measure_dmr(&self, periods: u64, successes: u64) -> f64 {
        if periods == 0 {
            return self.rho_prev;
        }
        (1.0 - successes as f64 / periods as f64).clamp(0.0, 1.0)
    }

    /// Filtered estimate `lambda * rho + (1 - lambda) * rho_prev`.
    pub fn filtered(&self, rho: f64, params: &SamplerParams) -> f64 {
        params.lambda * rho + (1.0 - params.lambda) * self.rho_prev
    }

    /// Control error against the filtered estimate. Does not touch state.
    pub fn filter_error(&self, rho: f64, params: &SamplerParams) -> f64 {
        params.rho_ref - self.filtered(rho, params)
    }

    /// Period increment for error `e` given the stored history.
    pub fn delta_h(&self, e: f64, params: &SamplerParams) -> f64 {
        params.kp * (e - self.e_prev)
            + params.ki * e
            + params.kd * (e - 2.0 * self.e_prev + self.e_prev2)
    }

    /// Applies the incremental PID law, shifts the error history and stores
    /// the new (clamped) period.
    pub fn adapt(&mut self, e: f64, params: &SamplerParams) -> f64 {
        let dh = self.delta_h(e, params);
        self.h = (self.h - dh).clamp(params.h_min, params.h_max);
        self.e_prev2 = self.e_prev;
        self.e_prev = e;
        self.h
    }

    /// One full invocation: measure, filter, adapt, remember `rho`.
    pub fn invoke(&mut self, periods: u64, successes: u64, params: &SamplerParams) -> Adaptation {
        let rho = self.measure_dmr(periods, successes);
        let rho_filtered = self.filtered(rho, params);
        let error = params.rho_ref - rho_filtered;
        let h = self.adapt(error, params);
        self.rho_prev = rho;
        self.j += 1;
        Adaptation {
            rho,
            rho_filtered,
            error,
            h,
        }
    }

    /// Measurement without adaptation, for fixed-period sensors that still
    /// report their miss ratio.
    pub fn observe(&mut self, periods: u64, successes: u64, params: &SamplerParams) -> Adaptation {
        let rho = self.measure_dmr(periods, successes);
        let rho_filtered = self.filtered(rho, params);
        let error = params.rho_ref - rho_filtered;
        self.rho_prev = rho;
        self.j += 1;
        Adaptation {
            rho,
            rho_filtered,
            error,
            h: self.h,
        }
    }
}
