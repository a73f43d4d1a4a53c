//! Declarative scenario description, validation, and the built-in
//! reconfiguration and interference experiments.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use crate::medium::ChannelParams;
pub use crate::nodes::{ReferenceSpec, Scheme};
pub use crate::plant::PlantSpec;
pub use crate::sampler::SamplerParams;

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["reconfig", "interference-slight", "interference-severe"];

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("unknown scenario `{name}` (valid: {})", BUILTIN_NAMES.join(", "))]
    Unknown { name: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    /// Seconds of simulated time.
    pub duration: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub channel: ChannelParams,
    pub loops: Vec<LoopSpec>,
    pub interferers: Vec<InterfererSpec>,
    /// Prefix for exported artifacts; empty means the CLI picks one.
    pub output_prefix: String,
    /// Spacing of the output trace between events, seconds. Zero records at events only.
    pub record_interval: f64,
    /// |y| above this marks a loop as diverged.
    pub blowup_bound: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            name: "custom".to_string(),
            duration: 18.0,
            seed: 1,
            scheme: Scheme::Ftt,
            channel: ChannelParams::default(),
            loops: Vec::new(),
            interferers: Vec::new(),
            output_prefix: String::new(),
            record_interval: 0.001,
            blowup_bound: 1e3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopSpec {
    pub loop_id: u32,
    pub plant: PlantSpec,
    /// Sampling period at activation, seconds.
    pub initial_h: f64,
    pub sampler: SamplerParams,
    pub reference: ReferenceSpec,
    /// Sorted, disjoint `[start, end)` intervals in seconds. Empty means
    /// active for the whole run.
    pub activation_windows: Vec<[f64; 2]>,
    pub packet_bytes: u32,
    /// Controller computation time, seconds.
    pub compute_delay: f64,
    /// Send success reports through CSMA/CA instead of the direct side channel.
    pub report_over_medium: bool,
}

impl Default for LoopSpec {
    fn default() -> Self {
        LoopSpec {
            loop_id: 1,
            plant: PlantSpec::default(),
            initial_h: 0.010,
            sampler: SamplerParams::default(),
            reference: ReferenceSpec::default(),
            activation_windows: Vec::new(),
            packet_bytes: 32,
            compute_delay: 0.0,
            report_over_medium: false,
        }
    }
}

impl LoopSpec {
    pub fn with_id(loop_id: u32) -> Self {
        LoopSpec {
            loop_id,
            ..LoopSpec::default()
        }
    }

    pub fn windowed(loop_id: u32, start: f64, end: f64) -> Self {
        LoopSpec {
            activation_windows: vec![[start, end]],
            ..LoopSpec::with_id(loop_id)
        }
    }

    /// Activation windows with the "whole run" default expanded.
    pub fn windows(&self, duration: f64) -> Vec<[f64; 2]> {
        if self.activation_windows.is_empty() {
            vec![[0.0, duration]]
        } else {
            self.activation_windows.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterfererSpec {
    /// Seconds between packets.
    pub period: f64,
    pub packet_bytes: u32,
    /// `[start, end)` in seconds.
    pub window: [f64; 2],
}

impl Default for InterfererSpec {
    fn default() -> Self {
        InterfererSpec {
            period: 0.010,
            packet_bytes: 32,
            window: [6.0, 12.0],
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid("duration", "must be positive"));
        }
        if !(self.record_interval >= 0.0 && self.record_interval.is_finite()) {
            return Err(invalid("record_interval", "must be non-negative"));
        }
        if !(self.blowup_bound > 0.0) {
            return Err(invalid("blowup_bound", "must be positive"));
        }
        self.channel
            .check()
            .map_err(|(f, m)| invalid(format!("channel.{f}"), m))?;
        if self.loops.is_empty() {
            return Err(invalid("loops", "at least one loop is required"));
        }
        for (i, l) in self.loops.iter().enumerate() {
            let at = |f: &str| format!("loops[{i}].{f}");
            if self.loops[..i].iter().any(|o| o.loop_id == l.loop_id) {
                return Err(invalid(
                    at("loop_id"),
                    format!("duplicate id {}", l.loop_id),
                ));
            }
            l.sampler
                .check()
                .map_err(|(f, m)| invalid(at(&format!("sampler.{f}")), m))?;
            crate::plant::LtiPlant::new(&l.plant)
                .map_err(|e| invalid(at("plant"), e.to_string()))?;
            if !(l.initial_h >= l.sampler.h_min && l.initial_h <= l.sampler.h_max) {
                return Err(invalid(at("initial_h"), "must lie in [h_min, h_max]"));
            }
            if !(l.reference.wave_period > 0.0) {
                return Err(invalid(at("reference.wave_period"), "must be positive"));
            }
            if l.packet_bytes == 0 {
                return Err(invalid(at("packet_bytes"), "must be positive"));
            }
            if !(l.compute_delay >= 0.0 && l.compute_delay.is_finite()) {
                return Err(invalid(at("compute_delay"), "must be non-negative"));
            }
            let mut prev_end = 0.0;
            for (k, [s, e]) in l.activation_windows.iter().copied().enumerate() {
                if !(s >= prev_end && e > s) {
                    return Err(invalid(
                        at(&format!("activation_windows[{k}]")),
                        "windows must be sorted, disjoint and non-empty",
                    ));
                }
                prev_end = e;
            }
        }
        for (i, f) in self.interferers.iter().enumerate() {
            let at = |n: &str| format!("interferers[{i}].{n}");
            if !(f.period > 0.0 && f.period.is_finite()) {
                return Err(invalid(at("period"), "must be positive"));
            }
            if f.packet_bytes == 0 {
                return Err(invalid(at("packet_bytes"), "must be positive"));
            }
            if !(f.window[0] >= 0.0 && f.window[1] > f.window[0]) {
                return Err(invalid(at("window"), "must be a non-empty [start, end)"));
            }
        }
        Ok(())
    }
}

/// The two-loop plant with a pair of interferers that run over `[6, 12)` s.
fn interference(name: &str, period: f64) -> ScenarioSpec {
    ScenarioSpec {
        name: name.to_string(),
        loops: vec![LoopSpec::with_id(1), LoopSpec::with_id(2)],
        interferers: vec![
            InterfererSpec {
                period,
                ..InterfererSpec::default()
            };
            2
        ],
        ..ScenarioSpec::default()
    }
}

/// Built-in experiments:
///
/// * `reconfig`: loops 1 and 2 run throughout; loops 3 and 4 join at 6 s
///   and leave at 12 s.
/// * `interference-slight`: two loops; two interferers each send a packet
///   every 10 ms over `[6, 12)` s.
/// * `interference-severe`: as above, every 8 ms.
pub fn builtin(name: &str) -> Result<ScenarioSpec, ScenarioError> {
    let spec = match name {
        "reconfig" => ScenarioSpec {
            name: name.to_string(),
            loops: vec![
                LoopSpec::windowed(1, 0.0, 18.0),
                LoopSpec::windowed(2, 0.0, 18.0),
                LoopSpec::windowed(3, 6.0, 12.0),
                LoopSpec::windowed(4, 6.0, 12.0),
            ],
            ..ScenarioSpec::default()
        },
        "interference-slight" => interference(name, 0.010),
        "interference-severe" => interference(name, 0.008),
        _ => {
            return Err(ScenarioError::Unknown {
                name: name.to_string(),
            })
        }
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for name in BUILTIN_NAMES {
            builtin(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn reconfig_shape() {
        let s = builtin("reconfig").unwrap();
        assert_eq!(s.duration, 18.0);
        assert_eq!(s.loops.len(), 4);
        assert_eq!(s.loops[0].activation_windows, vec![[0.0, 18.0]]);
        assert_eq!(s.loops[2].activation_windows, vec![[6.0, 12.0]]);
        assert_eq!(s.loops[3].activation_windows, vec![[6.0, 12.0]]);
        assert!(s.interferers.is_empty());
    }

    #[test]
    fn interference_shapes() {
        let slight = builtin("interference-slight").unwrap();
        assert_eq!(slight.loops.len(), 2);
        assert_eq!(slight.interferers.len(), 2);
        assert!(slight
            .interferers
            .iter()
            .all(|i| i.period == 0.010 && i.window == [6.0, 12.0]));
        let severe = builtin("interference-severe").unwrap();
        assert_eq!(severe.interferers[0].period, 0.008);
    }

    #[test]
    fn unknown_builtin_lists_names() {
        let err = builtin("nope").unwrap_err();
        let msg = err.to_string();
        for name in BUILTIN_NAMES {
            assert!(msg.contains(name));
        }
    }

    #[test]
    fn validation_names_the_field() {
        let field = |s: ScenarioSpec| match s.validate().unwrap_err() {
            ScenarioError::Invalid { field, .. } => field,
            e => panic!("{e}"),
        };
        let base = builtin("reconfig").unwrap();

        let mut s = base.clone();
        s.duration = 0.0;
        assert_eq!(field(s), "duration");

        let mut s = base.clone();
        s.loops[1].loop_id = 1;
        assert_eq!(field(s), "loops[1].loop_id");

        let mut s = base.clone();
        s.loops[2].sampler.lambda = 0.0;
        assert_eq!(field(s), "loops[2].sampler.lambda");

        let mut s = base.clone();
        s.loops[0].initial_h = 0.05;
        assert_eq!(field(s), "loops[0].initial_h");

        let mut s = base.clone();
        s.loops[0].activation_windows = vec![[5.0, 8.0], [7.0, 9.0]];
        assert_eq!(field(s), "loops[0].activation_windows[1]");

        let mut s = base.clone();
        s.channel.loss_prob = 1.5;
        assert_eq!(field(s), "channel.loss_prob");

        let mut s = base.clone();
        s.loops.clear();
        assert_eq!(field(s), "loops");

        let mut s = builtin("interference-slight").unwrap();
        s.interferers[1].period = 0.0;
        assert_eq!(field(s), "interferers[1].period");
    }

    #[test]
    fn empty_windows_mean_always_on() {
        assert_eq!(LoopSpec::with_id(1).windows(18.0), vec![[0.0, 18.0]]);
    }
}
