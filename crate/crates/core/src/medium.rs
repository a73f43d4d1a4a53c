//! One shared radio channel in a single collision domain.
//!
//! Every node hears every other node. Access follows unslotted CSMA/CA with
//! binary exponential backoff; clear-channel assessment is instantaneous at
//! backoff expiry and does not see a frame that starts in the same
//! microsecond, so two nodes whose backoffs expire together collide. Any two
//! frames that overlap in time are both corrupted.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineError, NodeId};
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Bits per second.
    pub bitrate: f64,
    /// Seconds per backoff unit.
    pub backoff_unit: f64,
    pub min_be: u32,
    pub max_be: u32,
    pub max_csma_backoffs: u32,
    /// Probability that an otherwise clean frame is lost anyway.
    pub loss_prob: f64,
    pub mac_overhead_bytes: u32,
    /// Full CSMA/CA re-attempts after a collision. Zero means a collision is a loss.
    pub mac_retries: u32,
    /// Per-node transmit queue bound; `None` is unbounded.
    pub queue_limit: Option<u32>,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            bitrate: 250_000.0,
            backoff_unit: 0.000_32,
            min_be: 3,
            max_be: 5,
            max_csma_backoffs: 4,
            loss_prob: 0.0,
            mac_overhead_bytes: 0,
            mac_retries: 0,
            queue_limit: None,
        }
    }
}

impl ChannelParams {
    /// Returns the name of the first offending field.
    pub fn check(&self) -> Result<(), (&'static str, &'static str)> {
        if !(self.bitrate > 0.0) || !self.bitrate.is_finite() {
            return Err(("bitrate", "must be positive"));
        }
        if !(self.backoff_unit > 0.0) || !self.backoff_unit.is_finite() {
            return Err(("backoff_unit", "must be positive"));
        }
        if self.min_be > self.max_be {
            return Err(("min_be", "must not exceed max_be"));
        }
        if self.max_be > 20 {
            return Err(("max_be", "must be at most 20"));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(("loss_prob", "must lie in [0, 1]"));
        }
        if self.queue_limit == Some(0) {
            return Err(("queue_limit", "must be positive when set"));
        }
        Ok(())
    }

    pub fn backoff_unit_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.backoff_unit)
    }
}

/// Time on air for a frame of `size_bytes`, in seconds.
pub fn tx_duration(size_bytes: u32, params: &ChannelParams) -> f64 {
    f64::from(size_bytes + params.mac_overhead_bytes) * 8.0 / params.bitrate
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum PacketKind {
    Sample { value: f64 },
    Command { value: f64 },
    SuccessReport,
    Interference,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Packet {
    pub src: NodeId,
    pub dst: NodeId,
    pub size_bytes: u32,
    pub kind: PacketKind,
    /// Sampling period in force when the sample was taken, seconds.
    pub period: f64,
    pub deadline: SimTime,
    pub release_time: SimTime,
    pub loop_id: Option<u32>,
}

impl Packet {
    pub fn interference(src: NodeId, dst: NodeId, size_bytes: u32, at: SimTime) -> Self {
        Packet {
            src,
            dst,
            size_bytes,
            kind: PacketKind::Interference,
            period: 0.0,
            deadline: SimTime::MAX,
            release_time: at,
            loop_id: None,
        }
    }
}

/// Events the medium schedules for itself.
#[derive(Clone, Debug, PartialEq)]
pub enum MediumEvent {
    BackoffExpired(NodeId),
    TxEnd(u64),
    Delivery(Packet),
}

/// Packet fates. `offered` counts each packet once, however many attempts it takes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LossCounters {
    pub offered: u64,
    pub delivered: u64,
    pub collision: u64,
    pub access_failure: u64,
    pub random_loss: u64,
    pub queue_overflow: u64,
}

impl LossCounters {
    pub fn lost(&self) -> u64 {
        self.collision + self.access_failure + self.random_loss + self.queue_overflow
    }

    /// Packets offered but not yet delivered or lost.
    pub fn outstanding(&self) -> u64 {
        self.offered - self.delivered - self.lost()
    }
}

#[derive(Clone, Debug)]
struct Transmission {
    id: u64,
    sender: NodeId,
    start: SimTime,
    end: SimTime,
    corrupted: bool,
}

#[derive(Clone, Copy, Debug)]
struct Csma {
    nb: u32,
    be: u32,
    retries: u32,
    on_air: bool,
}

#[derive(Debug)]
struct MacNode {
    rng: ChaCha8Rng,
    queue: VecDeque<Packet>,
    csma: Option<Csma>,
}

#[derive(Debug)]
pub struct Medium {
    params: ChannelParams,
    seed: u64,
    nodes: BTreeMap<NodeId, MacNode>,
    active: Vec<Transmission>,
    next_tx: u64,
    busy_span: Option<(SimTime, SimTime)>,
    busy_closed: u64,
    totals: LossCounters,
    by_loop: BTreeMap<u32, LossCounters>,
}

impl Medium {
    pub fn new(params: ChannelParams, seed: u64) -> Self {
        Medium {
            params,
            seed,
            nodes: BTreeMap::new(),
            active: Vec::new(),
            next_tx: 0,
            busy_span: None,
            busy_closed: 0,
            totals: LossCounters::default(),
            by_loop: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    /// Registers a node with its own random stream. `stream` must be stable
    /// for the node's identity so that adding other nodes leaves its draws
    /// unchanged.
    pub fn add_node(&mut self, id: NodeId, stream: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        self.nodes.insert(
            id,
            MacNode {
                rng,
                queue: VecDeque::new(),
                csma: None,
            },
        );
    }

    pub fn totals(&self) -> LossCounters {
        self.totals
    }

    pub fn loop_counters(&self, loop_id: u32) -> LossCounters {
        self.by_loop.get(&loop_id).copied().unwrap_or_default()
    }

    /// Packets sitting in transmit queues, including frames on air.
    pub fn queued(&self) -> u64 {
        self.nodes.values().map(|n| n.queue.len() as u64).sum()
    }

    pub fn queue_len(&self, node: NodeId) -> usize {
        self.nodes.get(&node).map_or(0, |n| n.queue.len())
    }

    /// Whether a frame that started strictly before `now` is still on air.
    pub fn is_busy(&self, now: SimTime) -> bool {
        self.active.iter().any(|t| t.start < now && t.end > now)
    }

    /// Total time the channel carried at least one frame within `[0, horizon]`, in seconds.
    pub fn busy_time(&self, horizon: SimTime) -> f64 {
        let mut us = self.busy_closed;
        if let Some((s, e)) = self.busy_span {
            if s < horizon {
                us += e.min(horizon).as_micros() - s.as_micros();
            }
        }
        us as f64 * 1e-6
    }

    /// Hands a packet to its sender's FIFO transmit queue and starts channel
    /// access if the sender is idle.
    pub fn submit<E: From<MediumEvent>>(
        &mut self,
        packet: Packet,
        engine: &mut Engine<E>,
    ) -> Result<(), EngineError> {
        let node_id = packet.src;
        let loop_id = packet.loop_id;
        self.count(loop_id, |c| c.offered += 1);
        let limit = self.params.queue_limit;
        let node = self.node_mut(node_id);
        if limit.is_some_and(|l| node.queue.len() >= l as usize) {
            self.count(loop_id, |c| c.queue_overflow += 1);
            return Ok(());
        }
        node.queue.push_back(packet);
        if node.csma.is_none() {
            self.begin_access(node_id, 0, engine)?;
        }
        Ok(())
    }

    pub fn handle<E: From<MediumEvent>>(
        &mut self,
        event: MediumEvent,
        engine: &mut Engine<E>,
    ) -> Result<Option<Packet>, EngineError> {
        match event {
            MediumEvent::BackoffExpired(node) => {
                self.on_backoff_expired(node, engine)?;
                Ok(None)
            }
            MediumEvent::TxEnd(id) => {
                self.on_tx_end(id, engine)?;
                Ok(None)
            }
            MediumEvent::Delivery(packet) => Ok(Some(packet)),
        }
    }

    fn node_mut(&mut self, id: NodeId) -> &mut MacNode {
        self.nodes
            .get_mut(&id)
            .unwrap_or_else(|| panic!("{id} is not attached to the medium"))
    }

    fn count(&mut self, loop_id: Option<u32>, f: impl Fn(&mut LossCounters)) {
        f(&mut self.totals);
        if let Some(l) = loop_id {
            f(self.by_loop.entry(l).or_default());
        }
    }

    fn begin_access<E: From<MediumEvent>>(
        &mut self,
        node_id: NodeId,
        retries: u32,
        engine: &mut Engine<E>,
    ) -> Result<(), EngineError> {
        let be = self.params.min_be;
        self.node_mut(node_id).csma = Some(Csma {
            nb: 0,
            be,
            retries,
            on_air: false,
        });
        self.schedule_backoff(node_id, be, engine)
    }

    fn schedule_backoff<E: From<MediumEvent>>(
        &mut self,
        node_id: NodeId,
        be: u32,
        engine: &mut Engine<E>,
    ) -> Result<(), EngineError> {
        let unit = self.params.backoff_unit_time().as_micros();
        let slots: u64 = self.node_mut(node_id).rng.gen_range(0..(1u64 << be));
        let at = engine.now() + SimTime::from_micros(slots * unit);
        engine.schedule(at, node_id, MediumEvent::BackoffExpired(node_id).into())?;
        Ok(())
    }

    fn on_backoff_expired<E: From<MediumEvent>>(
        &mut self,
        node_id: NodeId,
        engine: &mut Engine<E>,
    ) -> Result<(), EngineError> {
        let now = engine.now();
        if self.is_busy(now) {
            let (max_be, max_nb) = (self.params.max_be, self.params.max_csma_backoffs);
            let node = self.node_mut(node_id);
            let csma = node.csma.as_mut().expect("backoff without channel access");
            csma.nb += 1;
            csma.be = (csma.be + 1).min(max_be);
            if csma.nb > max_nb {
                let packet = node.queue.pop_front().expect("access without packet");
                self.count(packet.loop_id, |c| c.access_failure += 1);
                return self.next_packet(node_id, engine);
            }
            let be = csma.be;
            return self.schedule_backoff(node_id, be, engine);
        }
        self.start_transmission(node_id, engine)
    }

    fn start_transmission<E: From<MediumEvent>>(
        &mut self,
        node_id: NodeId,
        engine: &mut Engine<E>,
    ) -> Result<(), EngineError> {
        let now = engine.now();
        let params = self.params.clone();
        let node = self.node_mut(node_id);
        node.csma.as_mut().expect("transmit without access").on_air = true;
        let size = node
            .queue
            .front()
            .expect("transmit without packet")
            .size_bytes;
        let end = now + SimTime::from_secs_f64(tx_duration(size, &params));

        let mut corrupted = false;
        for other in self.active.iter_mut().filter(|t| t.end > now) {
            other.corrupted = true;
            corrupted = true;
        }
        let id = self.next_tx;
        self.next_tx += 1;
        self.active.push(Transmission {
            id,
            sender: node_id,
            start: now,
            end,
            corrupted,
        });
        self.busy_span = match self.busy_span {
            Some((s, e)) if now <= e => Some((s, e.max(end))),
            Some((s, e)) => {
                self.busy_closed += e.as_micros() - s.as_micros();
                Some((now, end))
            }
            None => Some((now, end)),
        };
        engine.schedule(end, node_id, MediumEvent::TxEnd(id).into())?;
        Ok(())
    }

    fn on_tx_end<E: From<MediumEvent>>(
        &mut self,
        id: u64,
        engine: &mut Engine<E>,
    ) -> Result<(), EngineError> {
        let idx = self
            .active
            .iter()
            .position(|t| t.id == id)
            .expect("unknown transmission");
        let tx = self.active.swap_remove(idx);
        let (loss_prob, mac_retries) = (self.params.loss_prob, self.params.mac_retries);
        let node = self.node_mut(tx.sender);
        let csma = node.csma.expect("frame on air without access state");
        debug_assert!(csma.on_air);

        if tx.corrupted {
            if csma.retries < mac_retries {
                return self.begin_access(tx.sender, csma.retries + 1, engine);
            }
            let packet = node.queue.pop_front().expect("frame without packet");
            self.count(packet.loop_id, |c| c.collision += 1);
            return self.next_packet(tx.sender, engine);
        }

        let lost = loss_prob > 0.0 && node.rng.gen_bool(loss_prob);
        let packet = node.queue.pop_front().expect("frame without packet");
        if lost {
            self.count(packet.loop_id, |c| c.random_loss += 1);
        } else {
            self.count(packet.loop_id, |c| c.delivered += 1);
            let dst = packet.dst;
            engine.schedule(engine.now(), dst, MediumEvent::Delivery(packet).into())?;
        }
        self.next_packet(tx.sender, engine)
    }

    fn next_packet<E: From<MediumEvent>>(
        &mut self,
        node_id: NodeId,
        engine: &mut Engine<E>,
    ) -> Result<(), EngineError> {
        let node = self.node_mut(node_id);
        node.csma = None;
        if node.queue.is_empty() {
            return Ok(());
        }
        self.begin_access(node_id, 0, engine)
    }
}
