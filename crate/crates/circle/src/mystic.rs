//! The working-node state machine.
//!
//! A Mystic ingests satellite data behind the circle identification token,
//! mines the sealed payload into a pending block, reports the hash to the
//! nearest Watchtower, and gossips the block to its n-nearest peers under the
//! per-peer throttle. Peers verify, append and ack (earning one Sparkling per
//! verified exchange); the origin finalizes at the 80% quorum or revokes on
//! the first reject, rolling every replica back. Charm pings keep it alive in
//! the Watchtower's registry; prolonged silence makes it re-register on its
//! own.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::ledger::{
    mine_block, open_payload, seal_payload, sha256, verify_block, Chain, DerivedKey, Hash256,
    VerificationOutcome, NONCE_LEN,
};
use crate::satellite::CircleToken;
use crate::sim::{EmitCtx, SimMessage, SimNode, TimerKind};
use crate::store::{BlockStore, InMemoryStore};
use crate::types::{CircleId, NodeId, Point};
use crate::wire::{
    AuditReplyBody, AuditRequestBody, Body, CharmAckBody, CharmPingBody, Credential,
    DataAcceptBody, DataSubmitBody, DiscoverProbeBody, DiscoverReplyBody, DispatchCtx, ErrorCode,
    GossipAckBody, GossipBlockBody, GossipRejectBody, HandleOutput, HashReportBody, MemberInfo,
    Outbound, RegisterAckBody, RegisterBody, ResyncRequestBody, RevokeNoticeBody,
    VerifiedNoticeBody, WireHandler, WireMessage,
};

/// Missed-charm factor after which a node treats itself (or is treated) as
/// having crossed the abyss.
pub const LIVENESS_TIMEOUT_FACTOR: u64 = 2;

#[derive(Debug, Clone)]
pub struct MysticConfig {
    pub id: NodeId,
    pub position: Point,
    pub circle_id: CircleId,
    /// The circle identification token registered on the ground pre-flight.
    pub circle_token: CircleToken,
    pub registration_secret: String,
    /// Known Watchtowers of the circle, with their positions.
    pub watchtowers: Vec<(NodeId, Point)>,
    pub difficulty: u8,
    pub gossip_fanout: usize,
    pub gossip_min_interval_s: u64,
    pub charm_interval_s: u64,
    /// Quorum fraction in permille (800 = 80%).
    pub quorum_permille: u64,
    pub key: DerivedKey,
}

/// A tentatively inserted block awaiting the verification quorum.
#[derive(Debug, Clone)]
pub struct PendingBlock {
    pub block: crate::ledger::Block,
    pub block_hash: Hash256,
    /// Verifiers so far; the origin's own ack is always present.
    pub acks: BTreeSet<NodeId>,
    pub created_at: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("circle token mismatch")]
    TokenMismatch,
    #[error("a pending block already exists")]
    Busy,
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub block_hash: Hash256,
    pub report: HashReportBody,
    /// The nearest Watchtower, where the hash report is addressed.
    pub report_to: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GossipDecision {
    Ack(GossipAckBody),
    Reject(GossipRejectBody),
    UnknownSender,
}

/// Quorum progression after tallying one ack or reject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuorumState {
    Pending,
    Verified { ack_count: u64 },
    Revoked,
    /// The message referenced a non-pending hash and was ignored.
    Stale,
}

/// Origin-side record of one verified insertion, kept for metrics.
#[derive(Debug, Clone, Serialize)]
pub struct VerifiedRecord {
    pub block_hash: Hash256,
    pub ingested_at: u64,
    pub verified_at: u64,
    pub ack_count: u64,
}

#[derive(Debug)]
pub struct Mystic {
    cfg: MysticConfig,
    chain: Chain,
    store: Box<dyn BlockStore>,
    sparkling: u64,
    /// Alive circle members other than self, as last told by the Watchtower.
    peers: BTreeMap<NodeId, MemberInfo>,
    last_gossip_sent: BTreeMap<NodeId, u64>,
    pending: Option<PendingBlock>,
    registered: bool,
    /// Last register_ack or charm ping heard from the Watchtower.
    last_contact: u64,
    /// Block hashes this node verified and acked (reward idempotence).
    acked: BTreeSet<Hash256>,
    /// Block hashes revoked circle-wide; they never re-enter the chain.
    revoked: BTreeSet<Hash256>,
    last_canonical: Option<Hash256>,
    pub verified_log: Vec<VerifiedRecord>,
    pub revoked_log: Vec<(Hash256, u64)>,
    ingest_count: u64,
    corr_seq: u64,
}

impl std::fmt::Debug for dyn BlockStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BlockStore(tip={:?})", self.tip_height())
    }
}

impl Mystic {
    pub fn new(cfg: MysticConfig) -> Self {
        Mystic::with_store(cfg, Box::new(InMemoryStore::new()))
    }

    pub fn with_store(cfg: MysticConfig, store: Box<dyn BlockStore>) -> Self {
        let chain = store.load_chain().expect("store loads at construction");
        Mystic {
            cfg,
            chain,
            store,
            sparkling: 0,
            peers: BTreeMap::new(),
            last_gossip_sent: BTreeMap::new(),
            pending: None,
            registered: false,
            last_contact: 0,
            acked: BTreeSet::new(),
            revoked: BTreeSet::new(),
            last_canonical: None,
            verified_log: Vec::new(),
            revoked_log: Vec::new(),
            ingest_count: 0,
            corr_seq: 0,
        }
    }

    pub fn id(&self) -> &NodeId {
        &self.cfg.id
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn sparkling(&self) -> u64 {
        self.sparkling
    }

    pub fn is_registered(&self) -> bool {
        self.registered
    }

    pub fn pending(&self) -> Option<&PendingBlock> {
        self.pending.as_ref()
    }

    pub fn peers(&self) -> &BTreeMap<NodeId, MemberInfo> {
        &self.peers
    }

    pub fn ingest_count(&self) -> u64 {
        self.ingest_count
    }

    pub fn last_canonical(&self) -> Option<Hash256> {
        self.last_canonical
    }

    fn next_corr(&mut self) -> String {
        self.corr_seq += 1;
        format!("{}-{}", self.cfg.id, self.corr_seq)
    }

    /// Count of alive members including self (when registered).
    fn alive_count(&self) -> u64 {
        self.peers.len() as u64 + u64::from(self.registered)
    }

    /// Smallest ack count satisfying the quorum fraction over `n` members.
    pub fn quorum_threshold(&self, alive_count: u64) -> u64 {
        quorum_threshold(self.cfg.quorum_permille, alive_count)
    }

    fn nearest_watchtower(&self) -> NodeId {
        self.cfg
            .watchtowers
            .iter()
            .min_by(|(a_id, a_pos), (b_id, b_pos)| {
                let da = self.cfg.position.distance_km(a_pos);
                let db = self.cfg.position.distance_km(b_pos);
                da.total_cmp(&db).then_with(|| a_id.cmp(b_id))
            })
            .map(|(id, _)| id.clone())
            .expect("a circle has at least one watchtower")
    }

    pub fn registration_request(&self) -> RegisterBody {
        RegisterBody {
            circle_id: self.cfg.circle_id.clone(),
            mystic_id: self.cfg.id.clone(),
            position: self.cfg.position,
            credential: Credential::Secret { secret: self.cfg.registration_secret.clone() },
        }
    }

    pub fn apply_register_ack(&mut self, ack: &RegisterAckBody, now: u64) {
        if ack.mystic_id != self.cfg.id {
            return;
        }
        self.registered = true;
        self.last_contact = now;
        self.apply_membership(&ack.alive);
    }

    /// Replace the alive view. Acks from members that died mid-quorum are
    /// discarded so a pending block only counts alive verifiers.
    pub fn apply_membership(&mut self, alive: &[MemberInfo]) {
        self.peers = alive
            .iter()
            .filter(|m| m.id != self.cfg.id)
            .map(|m| (m.id.clone(), m.clone()))
            .collect();
        if let Some(pending) = self.pending.as_mut() {
            let own = self.cfg.id.clone();
            pending.acks.retain(|id| *id == own || self.peers.contains_key(id));
        }
    }

    /// Registered Mystics answer discovery probes; unregistered ones stay silent.
    pub fn handle_discovery(&self, _probe: &DiscoverProbeBody) -> Option<DiscoverReplyBody> {
        if !self.registered {
            return None;
        }
        Some(DiscoverReplyBody {
            mystic_id: self.cfg.id.clone(),
            position: self.cfg.position,
            circle_id: self.cfg.circle_id.clone(),
        })
    }

    /// Seal, mine and tentatively insert one payload, producing the hash
    /// report for the nearest Watchtower.
    pub fn ingest_payload(
        &mut self,
        submit: &DataSubmitBody,
        now: u64,
    ) -> Result<IngestOutcome, IngestError> {
        if submit.circle_id != self.cfg.circle_id
            || submit.circle_token != self.cfg.circle_token.as_str()
        {
            return Err(IngestError::TokenMismatch);
        }
        if self.pending.is_some() {
            return Err(IngestError::Busy);
        }
        let plaintext = submit.payload.canonical_json();
        let nonce = self.seal_nonce(now, plaintext.as_bytes());
        let sealed = seal_payload(&self.cfg.key, plaintext.as_bytes(), &nonce);
        let block = mine_block(
            &self.chain,
            sealed,
            self.cfg.difficulty,
            now,
            self.cfg.id.clone(),
        )
        .expect("scenario difficulty is validated at load time");
        let block_hash = block.hash();
        let mut acks = BTreeSet::new();
        acks.insert(self.cfg.id.clone());
        self.pending = Some(PendingBlock { block, block_hash, acks, created_at: now });
        self.ingest_count += 1;
        Ok(IngestOutcome {
            block_hash,
            report: HashReportBody {
                mystic_id: self.cfg.id.clone(),
                block_hash,
                reported_at: now,
            },
            report_to: self.nearest_watchtower(),
        })
    }

    /// Nonce unique per (key, block): digest of origin, time and payload.
    fn seal_nonce(&self, now: u64, plaintext: &[u8]) -> [u8; NONCE_LEN] {
        let mut material = Vec::new();
        material.extend_from_slice(b"seal-nonce");
        material.extend_from_slice(self.cfg.id.as_str().as_bytes());
        material.extend_from_slice(&now.to_be_bytes());
        material.extend_from_slice(&self.ingest_count.to_be_bytes());
        material.extend_from_slice(sha256(plaintext).as_bytes());
        let digest = sha256(&material);
        let mut nonce = [0u8; NONCE_LEN];
        nonce.copy_from_slice(&digest.as_bytes()[..NONCE_LEN]);
        nonce
    }

    /// Send the pending block to the n-nearest unacked peers that are past
    /// the per-peer throttle. Returns an empty list when throttled or idle.
    pub fn gossip_round(&mut self, now: u64) -> Vec<(NodeId, GossipBlockBody)> {
        let Some(pending) = self.pending.as_ref() else {
            return Vec::new();
        };
        let own_pos = self.cfg.position;
        let mut candidates: Vec<&MemberInfo> = self
            .peers
            .values()
            .filter(|m| !pending.acks.contains(&m.id))
            .collect();
        candidates.sort_by(|a, b| {
            let da = own_pos.distance_km(&a.position);
            let db = own_pos.distance_km(&b.position);
            da.total_cmp(&db).then_with(|| a.id.cmp(&b.id))
        });
        let body = GossipBlockBody {
            block: pending.block.clone(),
            block_hash: pending.block_hash,
        };
        let mut out = Vec::new();
        for member in candidates.into_iter().take(self.cfg.gossip_fanout) {
            if self.throttle_allows(&member.id, now) {
                self.last_gossip_sent.insert(member.id.clone(), now);
                out.push((member.id.clone(), body.clone()));
            }
        }
        out
    }

    fn throttle_allows(&self, peer: &NodeId, now: u64) -> bool {
        self.last_gossip_sent
            .get(peer)
            .map_or(true, |last| now.saturating_sub(*last) >= self.cfg.gossip_min_interval_s)
    }

    /// Verify a gossiped block against the local chain and append it on
    /// success, earning one Sparkling. Replays of an already-held block ack
    /// idempotently.
    pub fn handle_gossip(
        &mut self,
        from: &NodeId,
        body: &GossipBlockBody,
        _now: u64,
    ) -> GossipDecision {
        if !self.peers.contains_key(from) {
            return GossipDecision::UnknownSender;
        }
        let ack = GossipAckBody {
            mystic_id: self.cfg.id.clone(),
            block_hash: body.block_hash,
        };
        let reject = |reason: &str| {
            GossipDecision::Reject(GossipRejectBody {
                mystic_id: self.cfg.id.clone(),
                block_hash: body.block_hash,
                reason: reason.to_string(),
            })
        };
        if self.revoked.contains(&body.block_hash) {
            return reject("revoked");
        }
        // The "token" match of the exchange: claimed hash vs recomputed hash.
        if body.block.hash() != body.block_hash {
            return reject("hash_mismatch");
        }
        // Idempotent replay of a block already in the chain.
        if self.chain.hash_at(body.block.header.height) == Some(body.block_hash) {
            return GossipDecision::Ack(ack);
        }
        match verify_block(&self.chain, &body.block) {
            VerificationOutcome::Invalid(reason) => reject(reason.as_str()),
            VerificationOutcome::Valid => {
                // All Mystics hold the circle key; verification includes
                // opening the sealed payload.
                if open_payload(&self.cfg.key, &body.block.payload_ciphertext).is_err() {
                    return reject("payload_auth_failure");
                }
                self.append_block(body.block.clone());
                self.sparkling += 1;
                self.acked.insert(body.block_hash);
                GossipDecision::Ack(ack)
            }
        }
    }

    fn append_block(&mut self, block: crate::ledger::Block) {
        self.store.put_block(&block).expect("store append after verification");
        self.chain.push_linked(block).expect("verified block links");
    }

    /// Tally one ack against the pending block.
    pub fn tally_ack(&mut self, from: &NodeId, body: &GossipAckBody, now: u64) -> QuorumState {
        let Some(pending) = self.pending.as_mut() else {
            return QuorumState::Stale;
        };
        if body.block_hash != pending.block_hash {
            return QuorumState::Stale;
        }
        if from != &self.cfg.id && !self.peers.contains_key(from) {
            // Acks only count from alive circle members.
            return QuorumState::Pending;
        }
        pending.acks.insert(from.clone());
        let ack_count = pending.acks.len() as u64;
        if ack_count >= self.quorum_threshold(self.alive_count()) {
            let pending = self.pending.take().expect("checked above");
            self.append_block(pending.block);
            self.verified_log.push(VerifiedRecord {
                block_hash: pending.block_hash,
                ingested_at: pending.created_at,
                verified_at: now,
                ack_count,
            });
            QuorumState::Verified { ack_count }
        } else {
            QuorumState::Pending
        }
    }

    /// Any reject revokes the pending insertion and discards the block.
    pub fn tally_reject(
        &mut self,
        _from: &NodeId,
        body: &GossipRejectBody,
        now: u64,
    ) -> QuorumState {
        let Some(pending) = self.pending.as_ref() else {
            return QuorumState::Stale;
        };
        if body.block_hash != pending.block_hash {
            return QuorumState::Stale;
        }
        self.revoked.insert(body.block_hash);
        self.revoked_log.push((body.block_hash, now));
        self.pending = None;
        QuorumState::Revoked
    }

    /// Roll back a block another origin revoked after this node acked it.
    pub fn handle_revoke_notice(&mut self, body: &RevokeNoticeBody) {
        self.revoked.insert(body.block_hash);
        if self.chain.tip_hash() == body.block_hash {
            let tip = self.chain.pop_tip().expect("non-empty chain has a tip");
            match tip.header.height.checked_sub(1) {
                Some(h) => self.store.truncate_to(h).expect("rollback below tip"),
                None => self.store.clear().expect("rollback of genesis"),
            }
        }
    }

    pub fn respond_charm(&mut self, ping: &CharmPingBody, now: u64) -> CharmAckBody {
        let _ = ping;
        self.last_contact = now;
        CharmAckBody { mystic_id: self.cfg.id.clone(), acked_at: now }
    }

    /// Pending blocks are not the tip: audits see the last finalized block.
    pub fn respond_audit(&self, _req: &AuditRequestBody) -> AuditReplyBody {
        AuditReplyBody { mystic_id: self.cfg.id.clone(), tip_hash: self.chain.tip_hash() }
    }

    /// Re-gossip the tip block to a straggler, still subject to the throttle.
    pub fn resync(&mut self, body: &ResyncRequestBody, now: u64) -> Option<(NodeId, GossipBlockBody)> {
        let tip = self.chain.tip()?;
        if !self.throttle_allows(&body.target_mystic, now) {
            return None;
        }
        let gossip = GossipBlockBody { block: tip.clone(), block_hash: self.chain.tip_hash() };
        self.last_gossip_sent.insert(body.target_mystic.clone(), now);
        Some((body.target_mystic.clone(), gossip))
    }
}

/// Smallest k with k ≥ (permille/1000) × n, in exact integer arithmetic.
pub fn quorum_threshold(permille: u64, alive_count: u64) -> u64 {
    (permille * alive_count).div_ceil(1000)
}

impl WireHandler for Mystic {
    fn wire_id(&self) -> &NodeId {
        &self.cfg.id
    }

    fn handle_wire(&mut self, message: &WireMessage, ctx: &DispatchCtx) -> Option<HandleOutput> {
        let corr = message.correlation_id.clone();
        let now = ctx.now;
        let output = match &message.body {
            Body::DiscoverProbe(probe) => match self.handle_discovery(probe) {
                Some(reply) => HandleOutput::respond(WireMessage::new(corr, Body::DiscoverReply(reply))),
                None => HandleOutput::none(),
            },
            Body::DataSubmit(submit) => match self.ingest_payload(submit, now) {
                Ok(outcome) => {
                    let accept = WireMessage::new(
                        corr,
                        Body::DataAccept(DataAcceptBody {
                            mystic_id: self.cfg.id.clone(),
                            block_hash: outcome.block_hash,
                        }),
                    );
                    let report_corr = self.next_corr();
                    let mut output = HandleOutput::respond(accept).with(Outbound::to(
                        outcome.report_to,
                        WireMessage::new(report_corr, Body::HashReport(outcome.report)),
                    ));
                    for (peer, gossip) in self.gossip_round(now) {
                        let corr = self.next_corr();
                        output = output.with(Outbound::to(
                            peer,
                            WireMessage::new(corr, Body::GossipBlock(gossip)),
                        ));
                    }
                    output
                }
                Err(e) => {
                    let code = match e {
                        IngestError::TokenMismatch => ErrorCode::TokenMismatch,
                        IngestError::Busy => ErrorCode::Busy,
                    };
                    HandleOutput::respond(WireMessage::error(corr, code, e.to_string()))
                }
            },
            Body::GossipBlock(body) => match self.handle_gossip(&ctx.from, body, now) {
                GossipDecision::Ack(ack) => {
                    HandleOutput::respond(WireMessage::new(corr, Body::GossipAck(ack)))
                }
                GossipDecision::Reject(reject) => {
                    HandleOutput::respond(WireMessage::new(corr, Body::GossipReject(reject)))
                }
                GossipDecision::UnknownSender => HandleOutput::respond(WireMessage::error(
                    corr,
                    ErrorCode::UnknownSender,
                    format!("{} is not an alive circle member", ctx.from),
                )),
            },
            Body::GossipAck(body) => match self.tally_ack(&ctx.from, body, now) {
                QuorumState::Verified { ack_count } => {
                    let notice_corr = self.next_corr();
                    HandleOutput::none().with(Outbound::broadcast(WireMessage::new(
                        notice_corr,
                        Body::VerifiedNotice(VerifiedNoticeBody {
                            origin: self.cfg.id.clone(),
                            block_hash: body.block_hash,
                            ack_count,
                        }),
                    )))
                }
                _ => HandleOutput::none(),
            },
            Body::GossipReject(body) => match self.tally_reject(&ctx.from, body, now) {
                QuorumState::Revoked => {
                    let notice_corr = self.next_corr();
                    HandleOutput::none().with(Outbound::broadcast(WireMessage::new(
                        notice_corr,
                        Body::RevokeNotice(RevokeNoticeBody {
                            origin: self.cfg.id.clone(),
                            block_hash: body.block_hash,
                        }),
                    )))
                }
                _ => HandleOutput::none(),
            },
            Body::VerifiedNotice(_) => HandleOutput::none(),
            Body::RevokeNotice(body) => {
                self.handle_revoke_notice(body);
                HandleOutput::none()
            }
            Body::CharmPing(ping) => {
                let ack = self.respond_charm(ping, now);
                HandleOutput::respond(WireMessage::new(corr, Body::CharmAck(ack)))
            }
            Body::AuditRequest(req) => {
                let reply = self.respond_audit(req);
                HandleOutput::respond(WireMessage::new(corr, Body::AuditReply(reply)))
            }
            Body::RegisterAck(ack) => {
                self.apply_register_ack(ack, now);
                HandleOutput::none()
            }
            Body::MembershipUpdate(update) => {
                if update.circle_id == self.cfg.circle_id {
                    self.apply_membership(&update.alive);
                }
                HandleOutput::none()
            }
            Body::CanonicalHash(body) => {
                self.last_canonical = Some(body.block_hash);
                HandleOutput::none()
            }
            Body::ResyncRequest(body) => match self.resync(body, now) {
                Some((target, gossip)) => {
                    let corr = self.next_corr();
                    HandleOutput::none()
                        .with(Outbound::to(target, WireMessage::new(corr, Body::GossipBlock(gossip))))
                }
                None => HandleOutput::none(),
            },
            Body::Error(_) => HandleOutput::none(),
            _ => return None,
        };
        Some(output)
    }
}

impl SimNode for Mystic {
    fn id(&self) -> &NodeId {
        &self.cfg.id
    }

    fn position(&self, _now: u64) -> Point {
        self.cfg.position
    }

    fn on_start(&mut self, ctx: &mut EmitCtx) {
        let corr = self.next_corr();
        let register = WireMessage::new(corr, Body::Register(self.registration_request()));
        ctx.send(self.nearest_watchtower(), register);
        ctx.timer_in(self.cfg.charm_interval_s, TimerKind::SelfCheck);
    }

    fn handle(&mut self, from: &NodeId, message: &SimMessage, ctx: &mut EmitCtx) {
        match message {
            SimMessage::Wire(msg) => {
                let dispatch_ctx = DispatchCtx { from: from.clone(), now: ctx.now() };
                if let Some(output) = self.handle_wire(msg, &dispatch_ctx) {
                    if let Some(response) = output.response {
                        ctx.send(from.clone(), response);
                    }
                    for outbound in output.outbound {
                        match outbound.target {
                            crate::wire::OutboundTarget::Node(dst) => ctx.send(dst, outbound.message),
                            crate::wire::OutboundTarget::Broadcast => ctx.broadcast(outbound.message),
                        }
                    }
                    // A fresh pending block needs its retry timer.
                    if matches!(msg.body, Body::DataSubmit(_)) && self.pending.is_some() {
                        ctx.timer_in(self.cfg.gossip_min_interval_s, TimerKind::GossipRetry);
                    }
                }
            }
            SimMessage::Timer(TimerKind::GossipRetry) => {
                if self.pending.is_some() {
                    for (peer, gossip) in self.gossip_round(ctx.now()) {
                        let corr = self.next_corr();
                        ctx.send(peer, WireMessage::new(corr, Body::GossipBlock(gossip)));
                    }
                    ctx.timer_in(self.cfg.gossip_min_interval_s, TimerKind::GossipRetry);
                }
            }
            SimMessage::Timer(TimerKind::SelfCheck) => {
                let now = ctx.now();
                let deadline = LIVENESS_TIMEOUT_FACTOR * self.cfg.charm_interval_s;
                if self.registered && now.saturating_sub(self.last_contact) > deadline {
                    // No charm heard for two intervals: assume we crossed the
                    // abyss and ask to come back to life.
                    self.registered = false;
                }
                if !self.registered {
                    let corr = self.next_corr();
                    ctx.send(
                        self.nearest_watchtower(),
                        WireMessage::new(corr, Body::Register(self.registration_request())),
                    );
                }
                ctx.timer_in(self.cfg.charm_interval_s, TimerKind::SelfCheck);
            }
            SimMessage::Timer(_) => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::derive_key;
    use crate::store::block_record_json;

    fn member(id: &str, x: f64, y: f64) -> MemberInfo {
        MemberInfo { id: NodeId::new(id), position: Point::new(x, y), external: false }
    }

    fn test_key() -> DerivedKey {
        derive_key(b"unit test key source", &[3u8; 32]).unwrap()
    }

    fn mystic(id: &str) -> Mystic {
        let cfg = MysticConfig {
            id: NodeId::new(id),
            position: Point::new(0.0, 0.0),
            circle_id: CircleId::new("circle-a"),
            circle_token: CircleToken::from_seed(42),
            registration_secret: "secret".into(),
            watchtowers: vec![(NodeId::new("w1"), Point::new(5.0, 5.0))],
            difficulty: 0,
            gossip_fanout: 2,
            gossip_min_interval_s: 900,
            charm_interval_s: 300,
            quorum_permille: 800,
            key: test_key(),
        };
        let mut m = Mystic::new(cfg);
        m.registered = true;
        m
    }

    fn registered_trio() -> (Mystic, Mystic, Mystic) {
        let mut m1 = mystic("m1");
        let mut m2 = mystic("m2");
        let mut m3 = mystic("m3");
        let members =
            vec![member("m1", 0.0, 0.0), member("m2", 10.0, 0.0), member("m3", 0.0, 10.0)];
        m1.apply_membership(&members);
        m2.apply_membership(&members);
        m3.apply_membership(&members);
        (m1, m2, m3)
    }

    fn submit(seq: u64) -> DataSubmitBody {
        DataSubmitBody {
            circle_id: CircleId::new("circle-a"),
            circle_token: CircleToken::from_seed(42).as_str().to_string(),
            payload: crate::satellite::SensorPayload {
                readings: crate::satellite::synthesize_readings(1, seq, 30),
                sequence: seq,
                sampled_at: 30,
            },
        }
    }

    fn chain_bytes(chain: &Chain) -> String {
        chain.blocks().iter().map(block_record_json).collect::<Vec<_>>().join("\n")
    }

    #[test]
    fn quorum_threshold_is_exact_ceiling() {
        assert_eq!(quorum_threshold(800, 3), 3); // ceil(2.4)
        assert_eq!(quorum_threshold(800, 5), 4); // ceil(4.0)
        assert_eq!(quorum_threshold(800, 4), 4); // ceil(3.2)
        assert_eq!(quorum_threshold(800, 10), 8);
        assert_eq!(quorum_threshold(800, 1), 1);
        assert_eq!(quorum_threshold(1000, 7), 7);
    }

    #[test]
    fn discovery_answers_only_when_registered() {
        let (m1, _, _) = registered_trio();
        let probe = DiscoverProbeBody {
            satellite_id: NodeId::new("sat"),
            position: Point::new(0.0, 0.0),
            sent_at: 1,
        };
        let reply = m1.handle_discovery(&probe).unwrap();
        assert_eq!(reply.mystic_id, NodeId::new("m1"));
        assert_eq!(reply.position, Point::new(0.0, 0.0));

        let mut silent = mystic("m9");
        silent.registered = false;
        assert_eq!(silent.handle_discovery(&probe), None);
    }

    #[test]
    fn ingest_creates_pending_and_reports_to_nearest_watchtower() {
        let (mut m1, _, _) = registered_trio();
        let outcome = m1.ingest_payload(&submit(0), 40).unwrap();
        assert_eq!(outcome.report_to, NodeId::new("w1"));
        assert_eq!(outcome.report.reported_at, 40);
        assert_eq!(outcome.report.block_hash, outcome.block_hash);
        let pending = m1.pending().unwrap();
        assert_eq!(pending.block_hash, outcome.block_hash);
        assert!(pending.acks.contains(&NodeId::new("m1")), "origin ack is implicit");
        assert_eq!(m1.chain().len(), 0, "pending blocks are not the tip");
    }

    #[test]
    fn ingest_rejects_wrong_token_without_state_change() {
        let (mut m1, _, _) = registered_trio();
        let mut bad = submit(0);
        bad.circle_token = "00".repeat(32);
        assert_eq!(m1.ingest_payload(&bad, 40).unwrap_err(), IngestError::TokenMismatch);
        assert!(m1.pending().is_none());
        assert_eq!(m1.chain().len(), 0);
        assert_eq!(m1.ingest_count(), 0);
    }

    #[test]
    fn second_ingest_before_quorum_is_busy() {
        let (mut m1, _, _) = registered_trio();
        m1.ingest_payload(&submit(0), 40).unwrap();
        assert_eq!(m1.ingest_payload(&submit(1), 41).unwrap_err(), IngestError::Busy);
    }

    #[test]
    fn gossip_round_targets_two_nearest_by_distance() {
        let mut m1 = mystic("m1");
        m1.apply_membership(&[
            member("m1", 0.0, 0.0),
            member("m2", 10.0, 0.0),
            member("m3", 5.0, 0.0),
            member("m4", 20.0, 0.0),
        ]);
        m1.ingest_payload(&submit(0), 40).unwrap();
        let targets: Vec<String> =
            m1.gossip_round(40).into_iter().map(|(id, _)| id.to_string()).collect();
        assert_eq!(targets, vec!["m3", "m2"], "two nearest of three peers");
    }

    #[test]
    fn gossip_round_is_throttled_per_peer() {
        let (mut m1, _, _) = registered_trio();
        m1.ingest_payload(&submit(0), 40).unwrap();
        assert_eq!(m1.gossip_round(40).len(), 2);
        assert_eq!(m1.gossip_round(41).len(), 0, "throttled one second later");
        assert_eq!(m1.gossip_round(40 + 900).len(), 2, "re-emitted to unacked peers");
    }

    #[test]
    fn gossip_round_skips_acked_peers() {
        let (mut m1, mut m2, _) = registered_trio();
        m1.ingest_payload(&submit(0), 40).unwrap();
        let round = m1.gossip_round(40);
        let (_, body) = round.iter().find(|(id, _)| id == &NodeId::new("m2")).unwrap();
        let GossipDecision::Ack(ack) = m2.handle_gossip(&NodeId::new("m1"), body, 41) else {
            panic!("expected ack");
        };
        m1.tally_ack(&NodeId::new("m2"), &ack, 42);
        let next: Vec<String> =
            m1.gossip_round(40 + 900).into_iter().map(|(id, _)| id.to_string()).collect();
        assert_eq!(next, vec!["m3"], "m2 already acked");
    }

    #[test]
    fn handle_gossip_verifies_appends_and_rewards() {
        let (mut m1, mut m2, _) = registered_trio();
        m1.ingest_payload(&submit(0), 40).unwrap();
        let round = m1.gossip_round(40);
        let (_, body) = round.iter().find(|(id, _)| id == &NodeId::new("m2")).unwrap();

        let decision = m2.handle_gossip(&NodeId::new("m1"), body, 41);
        assert!(matches!(decision, GossipDecision::Ack(_)));
        assert_eq!(m2.chain().len(), 1, "verifier appends at ack time");
        assert_eq!(m2.chain().tip_hash(), body.block_hash);
        assert_eq!(m2.sparkling(), 1);

        // Replay: idempotent ack, no duplicate append, no double reward.
        let replay = m2.handle_gossip(&NodeId::new("m1"), body, 42);
        assert!(matches!(replay, GossipDecision::Ack(_)));
        assert_eq!(m2.chain().len(), 1);
        assert_eq!(m2.sparkling(), 1);
    }

    #[test]
    fn handle_gossip_rejects_tampered_ciphertext() {
        let (mut m1, mut m2, _) = registered_trio();
        m1.ingest_payload(&submit(0), 40).unwrap();
        let round = m1.gossip_round(40);
        let (_, body) = round.iter().find(|(id, _)| id == &NodeId::new("m2")).unwrap();
        let mut tampered = body.clone();
        tampered.block.payload_ciphertext[0] ^= 0x01;
        match m2.handle_gossip(&NodeId::new("m1"), &tampered, 41) {
            GossipDecision::Reject(r) => assert_eq!(r.reason, "payload_hash_mismatch"),
            other => panic!("expected reject, got {other:?}"),
        }
        assert_eq!(m2.chain().len(), 0);
        assert_eq!(m2.sparkling(), 0);
    }

    #[test]
    fn handle_gossip_rejects_claimed_hash_mismatch() {
        let (mut m1, mut m2, _) = registered_trio();
        m1.ingest_payload(&submit(0), 40).unwrap();
        let round = m1.gossip_round(40);
        let (_, body) = round.iter().find(|(id, _)| id == &NodeId::new("m2")).unwrap();
        let mut lied = body.clone();
        let mut bytes = *lied.block_hash.as_bytes();
        bytes[0] ^= 0xff;
        lied.block_hash = Hash256::from_bytes(bytes);
        match m2.handle_gossip(&NodeId::new("m1"), &lied, 41) {
            GossipDecision::Reject(r) => assert_eq!(r.reason, "hash_mismatch"),
            other => panic!("expected reject, got {other:?}"),
        }
    }

    #[test]
    fn handle_gossip_unknown_sender() {
        let (_, mut m2, _) = registered_trio();
        let (mut m1, _, _) = registered_trio();
        m1.ingest_payload(&submit(0), 40).unwrap();
        let round = m1.gossip_round(40);
        let (_, body) = round.iter().find(|(id, _)| id == &NodeId::new("m2")).unwrap();
        assert_eq!(
            m2.handle_gossip(&NodeId::new("stranger"), body, 41),
            GossipDecision::UnknownSender
        );
    }

    #[test]
    fn quorum_three_members_needs_all_three() {
        let (mut m1, mut m2, mut m3) = registered_trio();
        m1.ingest_payload(&submit(0), 40).unwrap();
        let round = m1.gossip_round(40);
        let acks: Vec<(NodeId, GossipAckBody)> = round
            .iter()
            .map(|(id, body)| {
                let target = if id == &NodeId::new("m2") { &mut m2 } else { &mut m3 };
                match target.handle_gossip(&NodeId::new("m1"), body, 41) {
                    GossipDecision::Ack(a) => (id.clone(), a),
                    other => panic!("expected ack, got {other:?}"),
                }
            })
            .collect();

        // Origin counts itself: 1 (own) + first peer = 2 of 3 required acks.
        let (first_id, first_ack) = &acks[0];
        assert_eq!(m1.tally_ack(first_id, first_ack, 42), QuorumState::Pending);
        assert_eq!(m1.chain().len(), 0);

        let (second_id, second_ack) = &acks[1];
        assert_eq!(
            m1.tally_ack(second_id, second_ack, 43),
            QuorumState::Verified { ack_count: 3 }
        );
        assert_eq!(m1.chain().len(), 1, "finalized into the chain");
        assert!(m1.pending().is_none());
        assert_eq!(m1.verified_log.len(), 1);
        assert_eq!(m1.verified_log[0].ack_count, 3);

        // Additional acks after verification are stale and change nothing.
        assert_eq!(m1.tally_ack(first_id, first_ack, 44), QuorumState::Stale);
        assert_eq!(m1.chain().len(), 1);
    }

    #[test]
    fn reject_revokes_and_restores_chain_bytes() {
        let (mut m1, mut m2, _) = registered_trio();
        let before = chain_bytes(m1.chain());
        m1.ingest_payload(&submit(0), 40).unwrap();
        let round = m1.gossip_round(40);
        let (_, body) = round.iter().find(|(id, _)| id == &NodeId::new("m2")).unwrap();
        let mut tampered = body.clone();
        tampered.block.payload_ciphertext[0] ^= 0x01;
        let GossipDecision::Reject(reject) = m2.handle_gossip(&NodeId::new("m1"), &tampered, 41)
        else {
            panic!("expected reject");
        };
        assert_eq!(m1.tally_reject(&NodeId::new("m2"), &reject, 42), QuorumState::Revoked);
        assert!(m1.pending().is_none());
        assert_eq!(chain_bytes(m1.chain()), before, "revocation restores state");

        // The revoked hash never re-enters the chain.
        let decision = m1.handle_gossip(&NodeId::new("m2"), body, 43);
        match decision {
            GossipDecision::Reject(r) => assert_eq!(r.reason, "revoked"),
            other => panic!("expected revoked reject, got {other:?}"),
        }
    }

    #[test]
    fn revoke_notice_rolls_back_acked_replicas() {
        let (mut m1, mut m2, _) = registered_trio();
        m1.ingest_payload(&submit(0), 40).unwrap();
        let round = m1.gossip_round(40);
        let (_, body) = round.iter().find(|(id, _)| id == &NodeId::new("m2")).unwrap();
        let before = chain_bytes(m2.chain());
        assert!(matches!(m2.handle_gossip(&NodeId::new("m1"), body, 41), GossipDecision::Ack(_)));
        assert_eq!(m2.chain().len(), 1);

        m2.handle_revoke_notice(&RevokeNoticeBody {
            origin: NodeId::new("m1"),
            block_hash: body.block_hash,
        });
        assert_eq!(m2.chain().len(), 0);
        assert_eq!(chain_bytes(m2.chain()), before);
        // Sparkling earned at ack time is not clawed back.
        assert_eq!(m2.sparkling(), 1);
    }

    #[test]
    fn audit_during_pending_reports_pre_insertion_tip() {
        let (mut m1, _, _) = registered_trio();
        let before_tip = m1.chain().tip_hash();
        m1.ingest_payload(&submit(0), 40).unwrap();
        let reply = m1.respond_audit(&AuditRequestBody { watchtower_id: NodeId::new("w1") });
        assert_eq!(reply.tip_hash, before_tip);
    }

    #[test]
    fn charm_ping_is_acked_and_updates_contact() {
        let (mut m1, _, _) = registered_trio();
        let ack =
            m1.respond_charm(&CharmPingBody { watchtower_id: NodeId::new("w1"), sent_at: 300 }, 301);
        assert_eq!(ack.acked_at, 301);
        assert_eq!(ack.mystic_id, NodeId::new("m1"));
        assert_eq!(m1.last_contact, 301);
    }

    #[test]
    fn membership_change_prunes_dead_acks() {
        let (mut m1, mut m2, _) = registered_trio();
        m1.ingest_payload(&submit(0), 40).unwrap();
        let round = m1.gossip_round(40);
        let (_, body) = round.iter().find(|(id, _)| id == &NodeId::new("m2")).unwrap();
        let GossipDecision::Ack(ack) = m2.handle_gossip(&NodeId::new("m1"), body, 41) else {
            panic!("expected ack");
        };
        m1.tally_ack(&NodeId::new("m2"), &ack, 42);
        assert_eq!(m1.pending().unwrap().acks.len(), 2);
        // m2 dies: its ack no longer counts.
        m1.apply_membership(&[member("m1", 0.0, 0.0), member("m3", 0.0, 10.0)]);
        assert_eq!(m1.pending().unwrap().acks.len(), 1);
    }

    #[test]
    fn unroutable_kind_for_register() {
        let (mut m1, _, _) = registered_trio();
        let msg = WireMessage::new(
            "x-1",
            Body::Register(RegisterBody {
                circle_id: CircleId::new("circle-a"),
                mystic_id: NodeId::new("m9"),
                position: Point::new(0.0, 0.0),
                credential: Credential::Secret { secret: "secret".into() },
            }),
        );
        let ctx = DispatchCtx { from: NodeId::new("m9"), now: 0 };
        let response = crate::wire::dispatch(&mut m1, &msg, &ctx).unwrap();
        match response.body {
            Body::Error(e) => assert_eq!(e.code, "UNROUTABLE_KIND"),
            other => panic!("expected error, got {other:?}"),
        }
    }
}
