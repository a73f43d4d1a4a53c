//! Wires loops, interferers and the shared medium into one event-driven run.
//!
//! Each loop is a sensor, a controller and an actuator. The sensor releases
//! a sample every `h`, the controller answers each sample with a command,
//! and the actuator applies every command it receives, reporting on-time
//! arrivals back to the sensor. Under FTT the sensor retunes `h` every
//! `t_spa` from the miss ratio those reports imply.

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::engine::{Engine, EngineError, Event, NodeId};
use crate::medium::{Medium, MediumEvent, Packet, PacketKind};
use crate::metrics::{ChannelSummary, LoopSummary, LoopTrace, Summary};
use crate::nodes::{ActuatorState, ControllerState, InterfererState, Role, Scheme, SensorState};
use crate::pid::NonPositivePeriod;
use crate::plant::LtiPlant;
use crate::scenario::{LoopSpec, ScenarioError, ScenarioSpec};
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("loop controller: {0}")]
    Controller(#[from] NonPositivePeriod),
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimEvent {
    SamplePeriodStart {
        loop_ix: usize,
        epoch: u32,
    },
    AdaptationTick {
        loop_ix: usize,
        epoch: u32,
    },
    /// Hand a packet to its sender's transmit queue.
    TxAttempt(Packet),
    Medium(MediumEvent),
    /// Periodic plant update for the output trace.
    IntegrationStep,
    ScenarioChange {
        loop_ix: usize,
        activate: bool,
    },
    InterferenceTick {
        ix: usize,
    },
}

impl From<MediumEvent> for SimEvent {
    fn from(e: MediumEvent) -> Self {
        SimEvent::Medium(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Owner {
    Sensor(usize),
    Controller(usize),
    Actuator(usize),
    Interferer,
    Sink,
}

struct LoopRuntime {
    spec: LoopSpec,
    sensor: SensorState,
    controller_node: NodeId,
    actuator_node: NodeId,
    controller: ControllerState,
    actuator: ActuatorState,
    plant: LtiPlant,
    plant_t: SimTime,
    halted: bool,
    interval_start: SimTime,
    trace: LoopTrace,
}

pub struct RunResult {
    pub traces: Vec<LoopTrace>,
    pub summary: Summary,
    /// Fingerprint of the dispatch order; equal across identical runs.
    pub digest: u64,
    pub dispatched: u64,
    /// Packets still queued or on air at the horizon.
    pub queued_at_end: u64,
}

pub struct Simulation {
    spec: ScenarioSpec,
    engine: Engine<SimEvent>,
    medium: Medium,
    loops: Vec<LoopRuntime>,
    interferers: Vec<InterfererState>,
    owners: BTreeMap<NodeId, Owner>,
    end: SimTime,
    record_every: SimTime,
}

impl Simulation {
    pub fn new(spec: &ScenarioSpec) -> Result<Self, SimError> {
        spec.validate()?;
        let mut medium = Medium::new(spec.channel.clone(), spec.seed);
        let mut owners = BTreeMap::new();
        let mut loops = Vec::with_capacity(spec.loops.len());
        for (ix, l) in spec.loops.iter().enumerate() {
            let base = 3 * ix as u32;
            let nodes = [NodeId(base), NodeId(base + 1), NodeId(base + 2)];
            let roles = [Role::Sensor, Role::Controller, Role::Actuator];
            for (node, role) in nodes.iter().zip(roles) {
                medium.add_node(*node, role.stream(l.loop_id));
            }
            owners.insert(nodes[0], Owner::Sensor(ix));
            owners.insert(nodes[1], Owner::Controller(ix));
            owners.insert(nodes[2], Owner::Actuator(ix));
            let plant = LtiPlant::new(&l.plant).map_err(|e| ScenarioError::Invalid {
                field: alloc::format!("loops[{ix}].plant"),
                message: e.to_string(),
            })?;
            loops.push(LoopRuntime {
                spec: l.clone(),
                sensor: SensorState::new(nodes[0], l.loop_id, spec.scheme, l.initial_h),
                controller_node: nodes[1],
                actuator_node: nodes[2],
                controller: ControllerState::default(),
                actuator: ActuatorState::default(),
                plant,
                plant_t: SimTime::ZERO,
                halted: false,
                interval_start: SimTime::ZERO,
                trace: LoopTrace::new(l.loop_id),
            });
        }
        let base = 3 * spec.loops.len() as u32;
        let mut interferers = Vec::with_capacity(spec.interferers.len());
        for (ix, f) in spec.interferers.iter().enumerate() {
            let node = NodeId(base + 2 * ix as u32);
            let peer = NodeId(base + 2 * ix as u32 + 1);
            medium.add_node(node, Role::Interferer.stream(ix as u32));
            medium.add_node(peer, Role::Sink.stream(ix as u32));
            owners.insert(node, Owner::Interferer);
            owners.insert(peer, Owner::Sink);
            interferers.push(InterfererState {
                node,
                peer,
                period: SimTime::from_secs_f64(f.period),
                packet_bytes: f.packet_bytes,
                start: SimTime::from_secs_f64(f.window[0]),
                end: SimTime::from_secs_f64(f.window[1]),
                sent: 0,
            });
        }

        let mut sim = Simulation {
            end: SimTime::from_secs_f64(spec.duration),
            record_every: SimTime::from_secs_f64(spec.record_interval),
            spec: spec.clone(),
            engine: Engine::new(),
            medium,
            loops,
            interferers,
            owners,
        };
        sim.schedule_initial()?;
        Ok(sim)
    }

    fn schedule_initial(&mut self) -> Result<(), SimError> {
        for (ix, l) in self.loops.iter().enumerate() {
            for [s, e] in l.spec.windows(self.spec.duration) {
                let (s, e) = (SimTime::from_secs_f64(s), SimTime::from_secs_f64(e));
                let node = l.sensor.node;
                self.engine.schedule(
                    s,
                    node,
                    SimEvent::ScenarioChange {
                        loop_ix: ix,
                        activate: true,
                    },
                )?;
                self.engine.schedule(
                    e,
                    node,
                    SimEvent::ScenarioChange {
                        loop_ix: ix,
                        activate: false,
                    },
                )?;
            }
        }
        if self.record_every > SimTime::ZERO {
            self.engine
                .schedule(SimTime::ZERO, NodeId(u32::MAX), SimEvent::IntegrationStep)?;
        }
        for (ix, f) in self.interferers.iter().enumerate() {
            self.engine
                .schedule(f.start, f.node, SimEvent::InterferenceTick { ix })?;
        }
        Ok(())
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn run(mut self) -> Result<RunResult, SimError> {
        let end = self.end;
        let mut engine = core::mem::take(&mut self.engine);
        engine.run_until(end, |eng, ev| self.dispatch(eng, ev))?;
        Ok(self.finish(&engine))
    }

    fn dispatch(
        &mut self,
        eng: &mut Engine<SimEvent>,
        ev: Event<SimEvent>,
    ) -> Result<(), SimError> {
        let now = eng.now();
        match ev.kind {
            SimEvent::SamplePeriodStart { loop_ix, epoch } => {
                self.on_sample_period(eng, loop_ix, epoch)
            }
            SimEvent::AdaptationTick { loop_ix, epoch } => {
                self.on_adaptation_tick(eng, loop_ix, epoch)
            }
            SimEvent::TxAttempt(packet) => Ok(self.medium.submit(packet, eng)?),
            SimEvent::Medium(m) => {
                if let Some(packet) = self.medium.handle(m, eng)? {
                    self.on_delivery(eng, packet)?;
                }
                Ok(())
            }
            SimEvent::IntegrationStep => {
                for ix in 0..self.loops.len() {
                    if self.loops[ix].sensor.active {
                        self.advance_plant(ix, now);
                        self.record(ix, now);
                    }
                }
                let next = now + self.record_every;
                if next <= self.end {
                    eng.schedule(next, NodeId(u32::MAX), SimEvent::IntegrationStep)?;
                }
                Ok(())
            }
            SimEvent::ScenarioChange { loop_ix, activate } => {
                if activate {
                    self.activate(eng, loop_ix)
                } else {
                    self.deactivate(eng, loop_ix)
                }
            }
            SimEvent::InterferenceTick { ix } => {
                let f = &mut self.interferers[ix];
                if !f.in_window(now) {
                    return Ok(());
                }
                f.sent += 1;
                let packet = Packet::interference(f.node, f.peer, f.packet_bytes, now);
                let (node, next, end) = (f.node, now + f.period, f.end);
                self.medium.submit(packet, eng)?;
                if next < end {
                    eng.schedule(next, node, SimEvent::InterferenceTick { ix })?;
                }
                Ok(())
            }
        }
    }

    fn advance_plant(&mut self, ix: usize, now: SimTime) {
        let l = &mut self.loops[ix];
        if l.halted || now <= l.plant_t {
            return;
        }
        let dt = (now - l.plant_t).as_secs_f64();
        l.plant_t = now;
        if l.plant.step(dt).is_err() {
            l.halted = true;
            l.trace.diverged = true;
            l.sensor.deactivate();
            return;
        }
        if l.plant.output().abs() > self.spec.blowup_bound {
            l.trace.diverged = true;
        }
    }

    fn record(&mut self, ix: usize, now: SimTime) {
        let l = &mut self.loops[ix];
        if l.halted {
            return;
        }
        let t = now.as_secs_f64();
        let r = l.spec.reference.value_at(t);
        l.trace
            .record_output(t, r, l.plant.output(), l.plant.input());
    }

    fn activate(&mut self, eng: &mut Engine<SimEvent>, ix: usize) -> Result<(), SimError> {
        let now = eng.now();
        self.advance_plant(ix, now);
        let l = &mut self.loops[ix];
        if l.halted {
            return Ok(());
        }
        l.controller.reset();
        l.sensor.sampler = crate::sampler::SamplerState::new(l.spec.initial_h);
        let epoch = l.sensor.activate();
        l.interval_start = now;
        l.trace.record_period(now.as_secs_f64(), l.sensor.h());
        let (node, t_spa) = (l.sensor.node, SimTime::from_secs_f64(l.spec.sampler.t_spa));
        eng.schedule(
            now,
            node,
            SimEvent::SamplePeriodStart { loop_ix: ix, epoch },
        )?;
        eng.schedule(
            now + t_spa,
            node,
            SimEvent::AdaptationTick { loop_ix: ix, epoch },
        )?;
        self.record(ix, now);
        Ok(())
    }

    /// Ends an activation window. An adaptation interval that closes at this
    /// very instant is still measured.
    fn deactivate(&mut self, eng: &mut Engine<SimEvent>, ix: usize) -> Result<(), SimError> {
        let now = eng.now();
        if !self.loops[ix].sensor.active {
            return Ok(());
        }
        let l = &self.loops[ix];
        if l.interval_start + SimTime::from_secs_f64(l.spec.sampler.t_spa) == now {
            self.on_adaptation_tick(eng, ix, l.sensor.epoch)?;
        }
        self.advance_plant(ix, now);
        self.record(ix, now);
        self.loops[ix].sensor.deactivate();
        Ok(())
    }

    fn current(&self, ix: usize, epoch: u32) -> bool {
        let s = &self.loops[ix].sensor;
        s.active && s.epoch == epoch
    }

    fn on_sample_period(
        &mut self,
        eng: &mut Engine<SimEvent>,
        ix: usize,
        epoch: u32,
    ) -> Result<(), SimError> {
        if !self.current(ix, epoch) {
            return Ok(());
        }
        let now = eng.now();
        self.advance_plant(ix, now);
        if !self.current(ix, epoch) {
            return Ok(());
        }
        self.record(ix, now);
        let l = &mut self.loops[ix];
        let y = l.plant.output();
        let h = l.sensor.release();
        let h_time = l.sensor.h_time();
        let packet = Packet {
            src: l.sensor.node,
            dst: l.controller_node,
            size_bytes: l.spec.packet_bytes,
            kind: PacketKind::Sample { value: y },
            period: h,
            deadline: now + h_time,
            release_time: now,
            loop_id: Some(l.spec.loop_id),
        };
        let node = l.sensor.node;
        self.medium.submit(packet, eng)?;
        eng.schedule(
            now + h_time,
            node,
            SimEvent::SamplePeriodStart { loop_ix: ix, epoch },
        )?;
        Ok(())
    }

    fn on_adaptation_tick(
        &mut self,
        eng: &mut Engine<SimEvent>,
        ix: usize,
        epoch: u32,
    ) -> Result<(), SimError> {
        if !self.current(ix, epoch) {
            return Ok(());
        }
        let now = eng.now();
        let l = &mut self.loops[ix];
        let (periods, successes) = l.sensor.take_counters();
        let params = &l.spec.sampler;
        let step = match l.sensor.scheme {
            Scheme::Ftt => l.sensor.sampler.invoke(periods, successes, params),
            Scheme::Tt => l.sensor.sampler.observe(periods, successes, params),
        };
        let t = now.as_secs_f64();
        l.trace.record_dmr(
            l.interval_start.as_secs_f64(),
            t,
            step.rho,
            step.rho_filtered,
        );
        if l.sensor.scheme == Scheme::Ftt {
            l.trace.record_period(t, step.h);
        }
        l.interval_start = now;
        let next = now + SimTime::from_secs_f64(params.t_spa);
        let node = l.sensor.node;
        eng.schedule(next, node, SimEvent::AdaptationTick { loop_ix: ix, epoch })?;
        Ok(())
    }

    fn on_delivery(&mut self, eng: &mut Engine<SimEvent>, packet: Packet) -> Result<(), SimError> {
        match self.owners.get(&packet.dst).copied() {
            Some(Owner::Controller(ix)) => self.on_sample(eng, ix, packet),
            Some(Owner::Actuator(ix)) => self.on_command(eng, ix, packet),
            Some(Owner::Sensor(ix)) => {
                if packet.kind == PacketKind::SuccessReport && self.loops[ix].sensor.active {
                    self.loops[ix].sensor.on_report();
                }
                Ok(())
            }
            Some(Owner::Sink) | Some(Owner::Interferer) | None => Ok(()),
        }
    }

    fn on_sample(
        &mut self,
        eng: &mut Engine<SimEvent>,
        ix: usize,
        sample: Packet,
    ) -> Result<(), SimError> {
        let PacketKind::Sample { value: y } = sample.kind else {
            return Ok(());
        };
        let l = &mut self.loops[ix];
        if !l.sensor.active {
            return Ok(());
        }
        let now = eng.now();
        let r = l.spec.reference.value_at(now.as_secs_f64());
        let u = l.controller.pid_step(r, y, sample.period)?;
        let command = Packet {
            src: l.controller_node,
            dst: l.actuator_node,
            size_bytes: l.spec.packet_bytes,
            kind: PacketKind::Command { value: u },
            ..sample
        };
        let delay = SimTime::from_secs_f64(l.spec.compute_delay);
        if delay == SimTime::ZERO {
            self.medium.submit(command, eng)?;
        } else {
            let node = l.controller_node;
            eng.schedule(now + delay, node, SimEvent::TxAttempt(command))?;
        }
        Ok(())
    }

    fn on_command(
        &mut self,
        eng: &mut Engine<SimEvent>,
        ix: usize,
        command: Packet,
    ) -> Result<(), SimError> {
        let PacketKind::Command { value: u } = command.kind else {
            return Ok(());
        };
        if !self.loops[ix].sensor.active {
            return Ok(());
        }
        let now = eng.now();
        self.advance_plant(ix, now);
        let l = &mut self.loops[ix];
        if l.halted {
            return Ok(());
        }
        let on_time = l.actuator.on_command(u, command.deadline, now);
        let round_trip = (now - command.release_time).as_secs_f64();
        l.trace.record_actuation(round_trip, on_time);
        l.plant.set_input(u);
        self.record(ix, now);
        if !on_time {
            return Ok(());
        }
        let l = &mut self.loops[ix];
        if l.spec.report_over_medium {
            let report = Packet {
                src: l.actuator_node,
                dst: l.sensor.node,
                kind: PacketKind::SuccessReport,
                ..command
            };
            self.medium.submit(report, eng)?;
        } else {
            l.sensor.on_report();
        }
        Ok(())
    }

    fn finish(mut self, engine: &Engine<SimEvent>) -> RunResult {
        let duration = self.spec.duration;
        let totals = self.medium.totals();
        let busy = self.medium.busy_time(self.end) / duration;
        let mut summaries = Vec::with_capacity(self.loops.len());
        let mut traces = Vec::with_capacity(self.loops.len());
        for l in self.loops.drain(..) {
            let mut trace = l.trace;
            trace.losses = self.medium.loop_counters(l.spec.loop_id);
            summaries.push(LoopSummary {
                loop_id: trace.loop_id,
                iae: trace.iae(),
                mean_dmr: trace.mean_dmr(),
                max_abs_y: trace.max_abs_y,
                diverged: trace.diverged,
                commands_applied: trace.commands_applied,
                commands_late: trace.commands_late,
                mean_round_trip: trace.mean_round_trip(),
                max_round_trip: trace.round_trip_max,
                losses: trace.losses,
            });
            traces.push(trace);
        }
        RunResult {
            traces,
            summary: Summary {
                scenario: self.spec.name.clone(),
                scheme: self.spec.scheme.label().to_string(),
                seed: self.spec.seed,
                duration,
                loops: summaries,
                channel: ChannelSummary::from_counters(&totals, busy),
            },
            digest: engine.digest(),
            dispatched: engine.dispatched(),
            queued_at_end: self.medium.queued(),
        }
    }
}
