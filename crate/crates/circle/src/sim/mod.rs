//! Deterministic discrete-event network simulation.
//!
//! A single global queue orders envelopes by `(deliver_time, insertion seq)`,
//! so runs are a pure function of (scenario config, seed). The virtual clock
//! advances only by processing events. Latency is
//! `base + floor(distance_km × per_km)` virtual seconds, evaluated at send
//! time; fault rules mark envelopes dropped at send time and the queue
//! discards them at delivery time, recording them in the trace.

mod fault;
mod trace;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap};

use thiserror::Error;

use crate::types::{NodeId, Point};
use crate::wire::{self, WireMessage};

pub use fault::{DropRule, FaultPlan, PartitionRule};
pub use trace::{audit_gossip_throttle, DeliveryStatus, EventTrace, ThrottleViolation, TraceRecord};

/// Monotone virtual time in whole seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VirtualClock {
    now: u64,
}

impl VirtualClock {
    pub fn now(&self) -> u64 {
        self.now
    }

    fn advance_to(&mut self, t: u64) {
        debug_assert!(t >= self.now, "virtual clock never decreases");
        self.now = t;
    }
}

/// Self-scheduled node timers, delivered as ordinary envelopes with src == dst.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimerKind {
    /// Watchtower liveness sweep and ping fan-out.
    CharmCycle,
    /// Close the current hash-report round and select the canonical hash.
    HashRoundClose,
    /// Give up on outstanding audit replies.
    AuditTimeout { round: u64 },
    /// Mystic-side liveness self-check and registration retry.
    SelfCheck,
    /// Re-gossip the pending block to peers that have not acked.
    GossipRetry,
    /// A satellite pass begins: probe for Mystics.
    Pass { index: usize },
    /// The discovery response window closed: select and transmit.
    DiscoveryClose { pass: usize },
    /// No accept arrived for a transmission in time.
    TransmitTimeout { pass: usize },
}

impl TimerKind {
    pub fn name(&self) -> &'static str {
        match self {
            TimerKind::CharmCycle => "timer:charm_cycle",
            TimerKind::HashRoundClose => "timer:hash_round_close",
            TimerKind::AuditTimeout { .. } => "timer:audit_timeout",
            TimerKind::SelfCheck => "timer:self_check",
            TimerKind::GossipRetry => "timer:gossip_retry",
            TimerKind::Pass { .. } => "timer:pass",
            TimerKind::DiscoveryClose { .. } => "timer:discovery_close",
            TimerKind::TransmitTimeout { .. } => "timer:transmit_timeout",
        }
    }
}

/// What an envelope carries: a protocol message or a node-local timer.
#[derive(Debug, Clone, PartialEq)]
pub enum SimMessage {
    Wire(WireMessage),
    Timer(TimerKind),
}

/// A simulated network message with a deterministic delivery time.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub src: NodeId,
    pub dst: NodeId,
    pub send_time: u64,
    pub deliver_time: u64,
    pub message: SimMessage,
    /// Marked at send time when a fault rule matches.
    pub dropped: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("cannot schedule delivery at {deliver_time}, clock is already at {now}")]
    PastDelivery { deliver_time: u64, now: u64 },
}

/// Messages a handler emits while processing one event.
#[derive(Debug)]
pub struct EmitCtx {
    now: u64,
    emissions: Vec<Emission>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Emission {
    Send { dst: NodeId, message: WireMessage },
    Broadcast { message: WireMessage },
    Timer { at: u64, kind: TimerKind },
}

impl EmitCtx {
    fn new(now: u64) -> Self {
        EmitCtx { now, emissions: Vec::new() }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn send(&mut self, dst: NodeId, message: WireMessage) {
        self.emissions.push(Emission::Send { dst, message });
    }

    pub fn broadcast(&mut self, message: WireMessage) {
        self.emissions.push(Emission::Broadcast { message });
    }

    pub fn timer_at(&mut self, at: u64, kind: TimerKind) {
        self.emissions.push(Emission::Timer { at, kind });
    }

    pub fn timer_in(&mut self, delay: u64, kind: TimerKind) {
        let at = self.now + delay;
        self.timer_at(at, kind);
    }
}

/// A protocol node driven by the event loop. Handlers run one at a time.
pub trait SimNode {
    fn id(&self) -> &NodeId;

    fn position(&self, now: u64) -> Point;

    /// Seed initial messages and timers at scenario start.
    fn on_start(&mut self, ctx: &mut EmitCtx);

    fn handle(&mut self, from: &NodeId, message: &SimMessage, ctx: &mut EmitCtx);
}

/// Distance-based latency: `base + floor(distance_km × per_km)` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModel {
    pub base_s: u64,
    pub per_km_s: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel { base_s: 1, per_km_s: 0.0 }
    }
}

impl LatencyModel {
    pub fn latency(&self, distance_km: f64) -> u64 {
        self.base_s + (distance_km * self.per_km_s).floor() as u64
    }
}

#[derive(Debug)]
struct QueuedEnvelope {
    deliver_time: u64,
    seq: u64,
    envelope: Envelope,
}

impl PartialEq for QueuedEnvelope {
    fn eq(&self, other: &Self) -> bool {
        self.deliver_time == other.deliver_time && self.seq == other.seq
    }
}
impl Eq for QueuedEnvelope {}
impl PartialOrd for QueuedEnvelope {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEnvelope {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.deliver_time, self.seq).cmp(&(other.deliver_time, other.seq))
    }
}

/// The single-threaded event loop owning every node.
pub struct Simulator<N: SimNode> {
    clock: VirtualClock,
    nodes: BTreeMap<NodeId, N>,
    queue: BinaryHeap<Reverse<QueuedEnvelope>>,
    next_seq: u64,
    fault: FaultPlan,
    latency: LatencyModel,
    trace: EventTrace,
    trace_seq: u64,
}

impl<N: SimNode> Simulator<N> {
    pub fn new(latency: LatencyModel) -> Self {
        Simulator {
            clock: VirtualClock::default(),
            nodes: BTreeMap::new(),
            queue: BinaryHeap::new(),
            next_seq: 0,
            fault: FaultPlan::default(),
            latency,
            trace: EventTrace::default(),
            trace_seq: 0,
        }
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn add_node(&mut self, node: N) {
        self.nodes.insert(node.id().clone(), node);
    }

    pub fn node(&self, id: &NodeId) -> Option<&N> {
        self.nodes.get(id)
    }

    pub fn node_mut(&mut self, id: &NodeId) -> Option<&mut N> {
        self.nodes.get_mut(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &N> {
        self.nodes.values()
    }

    pub fn trace(&self) -> &EventTrace {
        &self.trace
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Install the fault plan for this run.
    pub fn inject_fault(&mut self, plan: FaultPlan) {
        self.fault = plan;
    }

    /// Enqueue an envelope. FIFO among equal delivery times.
    pub fn schedule(&mut self, mut envelope: Envelope) -> Result<(), SimError> {
        if envelope.deliver_time < self.clock.now() {
            return Err(SimError::PastDelivery {
                deliver_time: envelope.deliver_time,
                now: self.clock.now(),
            });
        }
        envelope.dropped = envelope.dropped
            || self.fault.should_drop(&envelope.src, &envelope.dst, envelope.send_time);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(QueuedEnvelope {
            deliver_time: envelope.deliver_time,
            seq,
            envelope,
        }));
        Ok(())
    }

    /// Invoke every node's `on_start` in id order and enqueue its emissions.
    pub fn start(&mut self) {
        let ids: Vec<NodeId> = self.nodes.keys().cloned().collect();
        for id in ids {
            let mut ctx = EmitCtx::new(self.clock.now());
            if let Some(node) = self.nodes.get_mut(&id) {
                node.on_start(&mut ctx);
            }
            self.process_emissions(&id, ctx.emissions);
        }
    }

    /// Process every event with `deliver_time < t_end` in order, then advance
    /// the clock to `t_end`. Events at exactly `t_end` stay queued.
    pub fn run_until(&mut self, t_end: u64) -> &EventTrace {
        assert!(t_end >= self.clock.now(), "run_until target precedes the clock");
        while let Some(Reverse(entry)) = self.queue.peek() {
            if entry.deliver_time >= t_end {
                break;
            }
            let Reverse(entry) = self.queue.pop().expect("peeked entry exists");
            self.clock.advance_to(entry.deliver_time);
            self.record(&entry.envelope);
            if entry.envelope.dropped {
                continue;
            }
            let dst = entry.envelope.dst.clone();
            let mut ctx = EmitCtx::new(self.clock.now());
            match self.nodes.get_mut(&dst) {
                Some(node) => {
                    node.handle(&entry.envelope.src, &entry.envelope.message, &mut ctx)
                }
                None => continue,
            }
            self.process_emissions(&dst, ctx.emissions);
        }
        self.clock.advance_to(t_end);
        &self.trace
    }

    fn record(&mut self, envelope: &Envelope) {
        let (kind, correlation_id, body) = match &envelope.message {
            SimMessage::Wire(msg) => (
                msg.kind().as_str().to_string(),
                Some(msg.correlation_id.clone()),
                Some(String::from_utf8(wire::encode(msg)).expect("canonical JSON is UTF-8")),
            ),
            SimMessage::Timer(kind) => (kind.name().to_string(), None, None),
        };
        let record = TraceRecord {
            seq: self.trace_seq,
            send_time: envelope.send_time,
            deliver_time: envelope.deliver_time,
            src: envelope.src.clone(),
            dst: envelope.dst.clone(),
            kind,
            correlation_id,
            body,
            status: if envelope.dropped { DeliveryStatus::Dropped } else { DeliveryStatus::Delivered },
        };
        self.trace_seq += 1;
        self.trace.push(record);
    }

    fn position_of(&self, id: &NodeId, now: u64) -> Option<Point> {
        self.nodes.get(id).map(|n| n.position(now))
    }

    fn process_emissions(&mut self, src: &NodeId, emissions: Vec<Emission>) {
        let now = self.clock.now();
        let src_pos = self.position_of(src, now);
        for emission in emissions {
            match emission {
                Emission::Send { dst, message } => {
                    self.schedule_wire(src, src_pos, dst, message, now);
                }
                Emission::Broadcast { message } => {
                    // One envelope per node present at send time, sender excluded.
                    let targets: Vec<NodeId> =
                        self.nodes.keys().filter(|id| *id != src).cloned().collect();
                    for dst in targets {
                        self.schedule_wire(src, src_pos, dst, message.clone(), now);
                    }
                }
                Emission::Timer { at, kind } => {
                    let envelope = Envelope {
                        src: src.clone(),
                        dst: src.clone(),
                        send_time: now,
                        deliver_time: at.max(now),
                        message: SimMessage::Timer(kind),
                        dropped: false,
                    };
                    self.schedule(envelope).expect("timer delivery clamped to now");
                }
            }
        }
    }

    fn schedule_wire(
        &mut self,
        src: &NodeId,
        src_pos: Option<Point>,
        dst: NodeId,
        message: WireMessage,
        now: u64,
    ) {
        let distance = match (src_pos, self.position_of(&dst, now)) {
            (Some(a), Some(b)) => a.distance_km(&b),
            _ => 0.0,
        };
        let deliver_time = now + self.latency.latency(distance);
        let envelope = Envelope {
            src: src.clone(),
            dst,
            send_time: now,
            deliver_time,
            message: SimMessage::Wire(message),
            dropped: false,
        };
        self.schedule(envelope).expect("deliver_time >= now by construction");
    }
}
