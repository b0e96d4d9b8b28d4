//! Node construction and the end-to-end scenario loop.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

use crate::ledger::{derive_key, CIRCLE_KEY_SALT};
use crate::mystic::{Mystic, MysticConfig, VerifiedRecord};
use crate::satellite::{CircleToken, PassOutcome, Satellite};
use crate::sim::{EmitCtx, LatencyModel, SimMessage, SimNode, Simulator};
use crate::store::{FileStore, InMemoryStore};
use crate::types::{CircleId, NodeId, Point};
use crate::watchtower::{Watchtower, WatchtowerConfig};

use super::{MetricsReport, ScenarioConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read key source {path}: {source}")]
    KeySource {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
}

/// Any node of the default scenarios.
#[derive(Debug)]
pub enum CircleNode {
    Mystic(Mystic),
    Watchtower(Watchtower),
    Satellite(Satellite),
}

impl SimNode for CircleNode {
    fn id(&self) -> &NodeId {
        match self {
            CircleNode::Mystic(n) => SimNode::id(n),
            CircleNode::Watchtower(n) => SimNode::id(n),
            CircleNode::Satellite(n) => SimNode::id(n),
        }
    }

    fn position(&self, now: u64) -> Point {
        match self {
            CircleNode::Mystic(n) => n.position(now),
            CircleNode::Watchtower(n) => n.position(now),
            CircleNode::Satellite(n) => n.position(now),
        }
    }

    fn on_start(&mut self, ctx: &mut EmitCtx) {
        match self {
            CircleNode::Mystic(n) => n.on_start(ctx),
            CircleNode::Watchtower(n) => n.on_start(ctx),
            CircleNode::Satellite(n) => n.on_start(ctx),
        }
    }

    fn handle(&mut self, from: &NodeId, message: &SimMessage, ctx: &mut EmitCtx) {
        match self {
            CircleNode::Mystic(n) => n.handle(from, message, ctx),
            CircleNode::Watchtower(n) => n.handle(from, message, ctx),
            CircleNode::Satellite(n) => n.handle(from, message, ctx),
        }
    }
}

/// Outcome of one run: the metrics report and the full event trace.
#[derive(Debug)]
pub struct RunOutput {
    pub metrics: MetricsReport,
    pub trace_jsonl: String,
}

/// Seed for a named deterministic stream derived from the scenario seed.
fn stream_seed(seed: u64, label: &str) -> u64 {
    let digest = crate::ledger::sha256(&[&seed.to_be_bytes()[..], label.as_bytes()].concat());
    u64::from_be_bytes(digest.as_bytes()[..8].try_into().expect("8 bytes"))
}

/// Build every node, register the circle, fly the satellite and run the
/// simulation to the configured end time. With `out_dir` set, Mystic chains
/// persist to `out_dir/chains/<id>.jsonl` and `metrics.json` / `trace.jsonl`
/// are written there too.
pub fn run_scenario(config: &ScenarioConfig, out_dir: Option<&Path>) -> Result<RunOutput, RunError> {
    let key_bytes = std::fs::read(&config.key_source_path).map_err(|source| RunError::KeySource {
        path: config.key_source_path.clone(),
        source,
    })?;
    let key = derive_key(&key_bytes, &CIRCLE_KEY_SALT).expect("fixed salt has the right length");

    let circle_id = CircleId::new(config.circle_id.clone());
    let token_seed =
        config.satellite.token_seed.unwrap_or_else(|| stream_seed(config.seed, "circle-token"));
    let circle_token = CircleToken::from_seed(token_seed);
    let flying_token = if config.satellite.corrupt_token {
        CircleToken::from_seed(stream_seed(token_seed, "corrupt"))
    } else {
        circle_token.clone()
    };

    let watchtowers: Vec<(NodeId, Point)> = (0..config.watchtower_count)
        .map(|i| (NodeId::new(format!("w{}", i + 1)), config.watchtower_positions[i]))
        .collect();
    let foreign: BTreeSet<NodeId> =
        config.foreign_watchtowers.iter().map(|id| NodeId::new(id.clone())).collect();

    let mut sim: Simulator<CircleNode> = Simulator::new(LatencyModel {
        base_s: config.base_latency_s,
        per_km_s: config.per_km_latency_s,
    });
    sim.inject_fault(config.fault_plan.clone());

    for (i, (id, position)) in watchtowers.iter().enumerate() {
        let wt = Watchtower::new(WatchtowerConfig {
            id: id.clone(),
            position: *position,
            circle_id: circle_id.clone(),
            registration_secret: config.registration_secret.clone(),
            charm_interval_s: config.charm_interval_s,
            audit_sample: config.audit_sample,
            audit_timeout_s: config.audit_timeout_s,
            hash_round_window_s: config.hash_round_window_s,
            token_ttl_s: config.token_ttl_s,
            foreign_watchtowers: foreign.clone(),
            rng_seed: stream_seed(config.seed, &format!("watchtower-{i}")),
        });
        sim.add_node(CircleNode::Watchtower(wt));
    }

    let chains_dir = out_dir.map(|d| d.join("chains"));
    if let Some(dir) = &chains_dir {
        std::fs::create_dir_all(dir)?;
    }
    for (i, position) in config.mystic_positions.iter().enumerate() {
        let id = NodeId::new(format!("m{}", i + 1));
        let cfg = MysticConfig {
            id: id.clone(),
            position: *position,
            circle_id: circle_id.clone(),
            circle_token: circle_token.clone(),
            registration_secret: config.registration_secret.clone(),
            watchtowers: watchtowers.clone(),
            difficulty: config.difficulty,
            gossip_fanout: config.gossip_fanout,
            gossip_min_interval_s: config.gossip_min_interval_s,
            charm_interval_s: config.charm_interval_s,
            quorum_permille: config.quorum_permille(),
            key: key.clone(),
        };
        let mystic = match &chains_dir {
            Some(dir) => {
                let store = FileStore::open(dir.join(format!("{id}.jsonl")))?;
                Mystic::with_store(cfg, Box::new(store))
            }
            None => Mystic::with_store(cfg, Box::new(InMemoryStore::new())),
        };
        sim.add_node(CircleNode::Mystic(mystic));
    }

    let mut satellite = Satellite::new(
        NodeId::new("sat"),
        circle_id,
        config.satellite.path.clone(),
        flying_token,
        stream_seed(config.seed, "telemetry"),
        config.satellite.passes.clone(),
    );
    satellite.discovery_window_s = config.discovery_window_s;
    satellite.transmit_timeout_s = config.transmit_timeout_s;
    sim.add_node(CircleNode::Satellite(satellite));

    sim.start();
    sim.run_until(config.duration());

    let metrics = collect_metrics(config, &sim);
    let trace_jsonl = sim.trace().to_jsonl();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.json"), metrics.to_canonical_json())?;
        std::fs::write(dir.join("trace.jsonl"), &trace_jsonl)?;
    }
    Ok(RunOutput { metrics, trace_jsonl })
}

fn collect_metrics(config: &ScenarioConfig, sim: &Simulator<CircleNode>) -> MetricsReport {
    let mut metrics = MetricsReport { scenario_seed: config.seed, ..Default::default() };
    let mut verified: Vec<VerifiedRecord> = Vec::new();
    for node in sim.nodes() {
        match node {
            CircleNode::Mystic(m) => {
                metrics.sparkling.insert(m.id().to_string(), m.sparkling());
                metrics.mystic_tips.insert(m.id().to_string(), m.chain().tip_hash());
                metrics.ingests += m.ingest_count();
                metrics.revoked_blocks += m.revoked_log.len() as u64;
                verified.extend(m.verified_log.iter().cloned());
            }
            CircleNode::Watchtower(w) => {
                metrics.abyss_events += w.abyss_log.len() as u64;
                metrics.resurrections += w.resurrection_log.len() as u64;
                metrics.audit_rounds += w.audits_passed + w.audits_failed;
                metrics.audit_failures += w.audits_failed;
                if metrics.canonical_hash.is_none() {
                    metrics.canonical_hash = w.canonical_hash();
                }
            }
            CircleNode::Satellite(s) => {
                for outcome in &s.outcomes {
                    match outcome {
                        PassOutcome::Accepted { .. } => {
                            metrics.data_submits += 1;
                            metrics.accepted_submits += 1;
                        }
                        PassOutcome::Rejected { .. } => {
                            metrics.data_submits += 1;
                            metrics.rejected_submits += 1;
                        }
                        PassOutcome::TimedOut { .. } => {
                            metrics.data_submits += 1;
                            metrics.timed_out_submits += 1;
                        }
                        PassOutcome::NoMystics { .. } => metrics.no_mystic_passes += 1,
                    }
                }
            }
        }
    }
    verified.sort_by_key(|r| (r.verified_at, r.block_hash.to_hex()));
    metrics.verified_blocks = verified.len() as u64;
    metrics.quorum_ack_counts = verified.iter().map(|r| r.ack_count).collect();
    if !verified.is_empty() {
        let total: u64 = verified.iter().map(|r| r.verified_at - r.ingested_at).sum();
        metrics.mean_verification_latency_virtual_s = total as f64 / verified.len() as f64;
    }
    metrics.dropped_envelopes = sim.trace().dropped_count();
    metrics
}
