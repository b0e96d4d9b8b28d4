//! Simulated suborbital device: telemetry synthesis, the pre-flight circle
//! identification token, ground-track mobility, and the discover/transmit
//! state machine.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::Hash256;
use crate::types::{CircleId, NodeId, Point};

/// One telemetry sample. Serializes to canonical JSON with sorted keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorPayload {
    pub readings: BTreeMap<String, f64>,
    pub sequence: u64,
    pub sampled_at: u64,
}

impl SensorPayload {
    /// Canonical JSON bytes (sorted keys, no insignificant whitespace).
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("payload serializes");
        serde_json::to_string(&value).expect("value serializes")
    }
}

/// The long, unique hexadecimal credential generated on the ground before the
/// flight. Immutable once the device has transmitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CircleToken(String);

impl CircleToken {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// 32 seeded-random bytes, hex-encoded. Deterministic per seed.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bytes = [0u8; 32];
        rng.fill(&mut bytes);
        CircleToken(hex::encode(bytes))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("the circle token cannot change once the flight has started")]
pub struct FlightAlreadyStarted;

/// Ground track of the device as a function of virtual time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroundPath {
    Fixed { position: Point },
    Line { start: Point, velocity_km_s: (f64, f64) },
    Circular { center: Point, radius_km: f64, period_s: u64 },
}

impl GroundPath {
    pub fn position(&self, now: u64) -> Point {
        match self {
            GroundPath::Fixed { position } => *position,
            GroundPath::Line { start, velocity_km_s } => Point::new(
                start.x_km + velocity_km_s.0 * now as f64,
                start.y_km + velocity_km_s.1 * now as f64,
            ),
            GroundPath::Circular { center, radius_km, period_s } => {
                let angle = TAU * (now % period_s) as f64 / *period_s as f64;
                Point::new(
                    center.x_km + radius_km * angle.cos(),
                    center.y_km + radius_km * angle.sin(),
                )
            }
        }
    }
}

/// Deterministic telemetry synthesizer: smooth sinusoids of virtual time plus
/// seeded noise, quantized to three decimals so the canonical JSON is stable.
pub fn synthesize_readings(seed: u64, sequence: u64, now: u64) -> BTreeMap<String, f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ sequence.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut noise = || rng.random_range(-1.0f64..1.0);
    let t = now as f64;
    let quant = |v: f64| (v * 1000.0).round() / 1000.0;
    let mut readings = BTreeMap::new();
    readings.insert(
        "temperature_c".to_string(),
        quant(-40.0 + 12.0 * (TAU * t / 5400.0).sin() + 0.8 * noise()),
    );
    readings.insert(
        "pressure_hpa".to_string(),
        quant(96.0 + 40.0 * (TAU * t / 7200.0).cos() + 1.5 * noise()),
    );
    readings.insert(
        "altitude_m".to_string(),
        quant(28000.0 + 4500.0 * (TAU * t / 7200.0).sin() + 25.0 * noise()),
    );
    readings
}

/// Terminal state of one satellite pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PassOutcome {
    Accepted { at: u64, mystic: NodeId, block_hash: Hash256 },
    Rejected { at: u64, code: String },
    TimedOut { at: u64 },
    NoMystics { at: u64 },
}

#[derive(Debug, Clone)]
pub(crate) struct PendingDiscovery {
    pub pass: usize,
    pub probe_position: Point,
    pub replies: Vec<(NodeId, Point)>,
}

#[derive(Debug, Clone)]
pub(crate) struct AwaitingAccept {
    pub pass: usize,
    pub target: NodeId,
}

/// State of the simulated device across one flight.
#[derive(Debug)]
pub struct Satellite {
    pub id: NodeId,
    pub circle_id: CircleId,
    path: GroundPath,
    token: CircleToken,
    payload_seed: u64,
    passes: Vec<u64>,
    sequence: u64,
    started: bool,
    /// How long to collect discovery replies before selecting, in virtual s.
    pub discovery_window_s: u64,
    /// How long to wait for a data_accept before giving up, in virtual s.
    pub transmit_timeout_s: u64,
    pub(crate) discovery: Option<PendingDiscovery>,
    pub(crate) awaiting: Option<AwaitingAccept>,
    pub outcomes: Vec<PassOutcome>,
    pub(crate) corr_seq: u64,
}

impl Satellite {
    pub fn new(
        id: NodeId,
        circle_id: CircleId,
        path: GroundPath,
        token: CircleToken,
        payload_seed: u64,
        passes: Vec<u64>,
    ) -> Self {
        Satellite {
            id,
            circle_id,
            path,
            token,
            payload_seed,
            passes,
            sequence: 0,
            started: false,
            discovery_window_s: 5,
            transmit_timeout_s: 30,
            discovery: None,
            awaiting: None,
            outcomes: Vec::new(),
            corr_seq: 0,
        }
    }

    pub fn token(&self) -> &CircleToken {
        &self.token
    }

    pub fn passes(&self) -> &[u64] {
        &self.passes
    }

    pub fn position(&self, now: u64) -> Point {
        self.path.position(now)
    }

    pub fn sequence(&self) -> u64 {
        self.sequence
    }

    pub(crate) fn mark_started(&mut self) {
        self.started = true;
    }

    /// Regenerate the circle token. Only possible on the ground, before the
    /// first transmission of the flight.
    pub fn make_circle_token(&mut self, seed: u64) -> Result<&CircleToken, FlightAlreadyStarted> {
        if self.started {
            return Err(FlightAlreadyStarted);
        }
        self.token = CircleToken::from_seed(seed);
        Ok(&self.token)
    }

    /// Stamp the current sequence number into a fresh payload and advance it.
    pub fn generate_payload(&mut self, now: u64) -> SensorPayload {
        let payload = SensorPayload {
            readings: synthesize_readings(self.payload_seed, self.sequence, now),
            sequence: self.sequence,
            sampled_at: now,
        };
        self.sequence += 1;
        payload
    }

    /// Pick the discovery responder nearest to the probe position. Ties break
    /// toward the smallest id.
    pub fn select_nearest(&self) -> Option<NodeId> {
        let discovery = self.discovery.as_ref()?;
        discovery
            .replies
            .iter()
            .min_by(|(a_id, a_pos), (b_id, b_pos)| {
                let da = discovery.probe_position.distance_km(a_pos);
                let db = discovery.probe_position.distance_km(b_pos);
                da.total_cmp(&db).then_with(|| a_id.cmp(b_id))
            })
            .map(|(id, _)| id.clone())
    }
}

impl Satellite {
    fn next_corr(&mut self) -> String {
        self.corr_seq += 1;
        format!("{}-{}", self.id, self.corr_seq)
    }
}

impl crate::sim::SimNode for Satellite {
    fn id(&self) -> &NodeId {
        &self.id
    }

    fn position(&self, now: u64) -> Point {
        self.path.position(now)
    }

    fn on_start(&mut self, ctx: &mut crate::sim::EmitCtx) {
        for (index, at) in self.passes.clone().into_iter().enumerate() {
            ctx.timer_at(at, crate::sim::TimerKind::Pass { index });
        }
    }

    fn handle(&mut self, from: &NodeId, message: &crate::sim::SimMessage, ctx: &mut crate::sim::EmitCtx) {
        use crate::sim::{SimMessage, TimerKind};
        use crate::wire::{Body, DataSubmitBody, DiscoverProbeBody, WireMessage};
        let now = ctx.now();
        match message {
            SimMessage::Timer(TimerKind::Pass { index }) => {
                let probe_position = self.path.position(now);
                self.discovery = Some(PendingDiscovery {
                    pass: *index,
                    probe_position,
                    replies: Vec::new(),
                });
                let corr = self.next_corr();
                ctx.broadcast(WireMessage::new(
                    corr,
                    Body::DiscoverProbe(DiscoverProbeBody {
                        satellite_id: self.id.clone(),
                        position: probe_position,
                        sent_at: now,
                    }),
                ));
                ctx.timer_in(self.discovery_window_s, TimerKind::DiscoveryClose { pass: *index });
            }
            SimMessage::Timer(TimerKind::DiscoveryClose { pass }) => {
                if self.discovery.as_ref().map(|d| d.pass) != Some(*pass) {
                    return;
                }
                match self.select_nearest() {
                    None => {
                        self.discovery = None;
                        self.outcomes.push(PassOutcome::NoMystics { at: now });
                    }
                    Some(target) => {
                        self.discovery = None;
                        let payload = self.generate_payload(now);
                        let corr = self.next_corr();
                        ctx.send(
                            target.clone(),
                            WireMessage::new(
                                corr,
                                Body::DataSubmit(DataSubmitBody {
                                    circle_id: self.circle_id.clone(),
                                    circle_token: self.token.as_str().to_string(),
                                    payload,
                                }),
                            ),
                        );
                        self.mark_started();
                        self.awaiting = Some(AwaitingAccept { pass: *pass, target });
                        ctx.timer_in(self.transmit_timeout_s, TimerKind::TransmitTimeout { pass: *pass });
                    }
                }
            }
            SimMessage::Timer(TimerKind::TransmitTimeout { pass }) => {
                if self.awaiting.as_ref().map(|a| a.pass) == Some(*pass) {
                    self.awaiting = None;
                    self.outcomes.push(PassOutcome::TimedOut { at: now });
                }
            }
            SimMessage::Timer(_) => {}
            SimMessage::Wire(msg) => match &msg.body {
                Body::DiscoverReply(reply) => {
                    if let Some(discovery) = self.discovery.as_mut() {
                        discovery.replies.push((reply.mystic_id.clone(), reply.position));
                    }
                }
                Body::DataAccept(accept) => {
                    if self.awaiting.as_ref().map(|a| &a.target) == Some(from) {
                        self.awaiting = None;
                        self.outcomes.push(PassOutcome::Accepted {
                            at: now,
                            mystic: from.clone(),
                            block_hash: accept.block_hash,
                        });
                    }
                }
                Body::Error(err) => {
                    if self.awaiting.as_ref().map(|a| &a.target) == Some(from) {
                        self.awaiting = None;
                        self.outcomes.push(PassOutcome::Rejected { at: now, code: err.code.clone() });
                    }
                }
                // Broadcast circle chatter is not for the device.
                _ => {}
            },
        }
    }
}
