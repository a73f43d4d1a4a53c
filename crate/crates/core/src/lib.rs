//! Deterministic discrete-event simulation of control loops closed over one
//! shared CSMA/CA wireless channel, with flexible time-triggered (FTT)
//! sampling: every smart sensor periodically retunes its own sampling period
//! from the deadline miss ratio it observes.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, CSV export and the
//! command-line front end live in the `ftt-sim` crate.
//!
//! ```
//! use ftt_core::scenario::{builtin, Scheme};
//! use ftt_core::sim::Simulation;
//!
//! let mut spec = builtin("interference-slight").unwrap();
//! spec.duration = 1.0;
//! spec.scheme = Scheme::Ftt;
//! let run = Simulation::new(&spec).unwrap().run().unwrap();
//! assert_eq!(run.traces.len(), 2);
//! assert!(!run.summary.loops[0].diverged);
//! ```
#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod engine;
pub mod medium;
pub mod metrics;
pub mod nodes;
pub mod pid;
pub mod plant;
pub mod sampler;
pub mod scenario;
pub mod sim;
pub mod time;

pub use engine::{Engine, EngineError, Event, EventQueue, NodeId};
pub use scenario::{ScenarioSpec, Scheme};
pub use sim::{RunResult, SimError, Simulation};
pub use time::SimTime;
