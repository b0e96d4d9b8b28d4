//! The gatekeeper state machine.
//!
//! A Watchtower admits Mystics behind the circle's registration secret (or an
//! inter-circle token for externals, capped by the (n/2)-2 quota), collects
//! hash reports and selects the canonical hash per round, runs the
//! post-verification random audit with resync for stragglers, sweeps liveness
//! with periodic charm pings (two missed intervals cross the abyss), and
//! manages the revocable trust tokens exchanged between circles.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ledger::Hash256;
use crate::mystic::LIVENESS_TIMEOUT_FACTOR;
use crate::sim::{EmitCtx, SimMessage, SimNode, TimerKind};
use crate::types::{CircleId, NodeId, Point};
use crate::wire::{
    AuditReplyBody, AuditRequestBody, Body, CanonicalHashBody, CharmAckBody, CharmPingBody,
    Credential, DispatchCtx, ErrorCode, HandleOutput, HashReportBody, MemberInfo,
    MembershipUpdateBody, Outbound, RegisterAckBody, RegisterBody, ResyncRequestBody,
    TokenGrantBody, TokenRenewBody, TokenRequestBody, TokenRevokedBody, WireHandler, WireMessage,
};

/// Cap on external Mystics from foreign circles: max(0, floor(n/2) - 2) where
/// n is the count of alive local Mystics.
pub fn external_quota(local_alive: u64) -> u64 {
    (local_alive / 2).saturating_sub(2)
}

/// A trust token allowing a foreign circle's Mystics to enter this one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterCircleToken {
    pub token_id: String,
    pub issuer_circle: CircleId,
    pub bearer_watchtower: NodeId,
    pub issued_at: u64,
    pub ttl_s: u64,
    pub revoked: bool,
}

impl InterCircleToken {
    /// Valid iff not revoked and `now < issued_at + ttl` (half-open).
    pub fn is_valid(&self, now: u64) -> bool {
        !self.revoked && now < self.issued_at + self.ttl_s
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegisterError {
    #[error("bad credentials")]
    BadCredentials,
    #[error("already registered")]
    AlreadyRegistered,
    #[error("invalid inter-circle token")]
    InvalidToken,
    #[error("external quota exceeded")]
    QuotaExceeded,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("unknown requester")]
    UnknownRequester,
    #[error("token expired or unknown")]
    ExpiredToken,
    #[error("renewal window must be positive")]
    InvalidWindow,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuditError {
    #[error("no canonical hash selected yet")]
    NoCanonicalHash,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no hash reports in the current round")]
pub struct EmptyRound;

#[derive(Debug, Clone)]
pub struct AliveEntry {
    pub position: Point,
    pub last_charm_ack: u64,
    pub external: bool,
}

#[derive(Debug, Clone)]
pub struct AbyssEntry {
    pub died_at: u64,
    /// Tip last seen from this Mystic via audit replies; zero if never audited.
    pub last_known_tip: Hash256,
    pub position: Point,
    pub external: bool,
}

/// Verdict of one audit round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditVerdict {
    pub round: u64,
    pub passed: bool,
    /// Mystics whose tip differed from the canonical hash (or never replied).
    pub suspects: Vec<NodeId>,
}

#[derive(Debug)]
struct AuditRound {
    id: u64,
    expected: BTreeSet<NodeId>,
    replies: BTreeMap<NodeId, Hash256>,
}

#[derive(Debug, Clone)]
pub struct WatchtowerConfig {
    pub id: NodeId,
    pub position: Point,
    pub circle_id: CircleId,
    pub registration_secret: String,
    pub charm_interval_s: u64,
    pub audit_sample: usize,
    pub audit_timeout_s: u64,
    pub hash_round_window_s: u64,
    pub token_ttl_s: u64,
    /// Foreign Watchtower ids allowed to request inter-circle tokens.
    pub foreign_watchtowers: BTreeSet<NodeId>,
    pub rng_seed: u64,
}

#[derive(Debug)]
pub struct Watchtower {
    cfg: WatchtowerConfig,
    alive: BTreeMap<NodeId, AliveEntry>,
    abyss: BTreeMap<NodeId, AbyssEntry>,
    canonical_hash: Option<Hash256>,
    reports: Vec<HashReportBody>,
    round_open: bool,
    issued_tokens: Vec<InterCircleToken>,
    audit_rng: ChaCha8Rng,
    token_rng: ChaCha8Rng,
    audit: Option<AuditRound>,
    next_audit_round: u64,
    /// Verified notice that arrived before the canonical hash was selected.
    pending_audit: Option<Hash256>,
    /// Last tip reported by each Mystic in audit replies.
    last_tips: BTreeMap<NodeId, Hash256>,
    timer_requests: Vec<(u64, TimerKind)>,
    pub abyss_log: Vec<(NodeId, u64)>,
    pub resurrection_log: Vec<(NodeId, u64)>,
    pub audits_passed: u64,
    pub audits_failed: u64,
    pub audit_suspects: u64,
    corr_seq: u64,
}

impl Watchtower {
    pub fn new(cfg: WatchtowerConfig) -> Self {
        let audit_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0xa0d1_7000_0000_0001);
        let token_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x70cc_e200_0000_0002);
        Watchtower {
            cfg,
            alive: BTreeMap::new(),
            abyss: BTreeMap::new(),
            canonical_hash: None,
            reports: Vec::new(),
            round_open: false,
            issued_tokens: Vec::new(),
            audit_rng,
            token_rng,
            audit: None,
            next_audit_round: 0,
            pending_audit: None,
            last_tips: BTreeMap::new(),
            timer_requests: Vec::new(),
            abyss_log: Vec::new(),
            resurrection_log: Vec::new(),
            audits_passed: 0,
            audits_failed: 0,
            audit_suspects: 0,
            corr_seq: 0,
        }
    }

    pub fn id(&self) -> &NodeId {
        &self.cfg.id
    }

    pub fn alive(&self) -> &BTreeMap<NodeId, AliveEntry> {
        &self.alive
    }

    pub fn abyss(&self) -> &BTreeMap<NodeId, AbyssEntry> {
        &self.abyss
    }

    pub fn canonical_hash(&self) -> Option<Hash256> {
        self.canonical_hash
    }

    pub fn issued_tokens(&self) -> &[InterCircleToken] {
        &self.issued_tokens
    }

    pub fn local_alive_count(&self) -> u64 {
        self.alive.values().filter(|e| !e.external).count() as u64
    }

    pub fn external_count(&self) -> u64 {
        self.alive.values().filter(|e| e.external).count() as u64
    }

    fn next_corr(&mut self) -> String {
        self.corr_seq += 1;
        format!("{}-{}", self.cfg.id, self.corr_seq)
    }

    fn membership(&self) -> Vec<MemberInfo> {
        self.alive
            .iter()
            .map(|(id, e)| MemberInfo { id: id.clone(), position: e.position, external: e.external })
            .collect()
    }

    /// Admit a Mystic into the circle. Local members present the shared
    /// secret; externals present a valid inter-circle token and are capped by
    /// the quota. Registering out of the abyss is a resurrection.
    pub fn register_mystic(
        &mut self,
        req: &RegisterBody,
        now: u64,
    ) -> Result<RegisterAckBody, RegisterError> {
        let external = match &req.credential {
            Credential::Secret { secret } => {
                if secret != &self.cfg.registration_secret {
                    return Err(RegisterError::BadCredentials);
                }
                false
            }
            Credential::Token { token_id } => {
                let valid = self
                    .issued_tokens
                    .iter()
                    .any(|t| &t.token_id == token_id && t.is_valid(now));
                if !valid {
                    return Err(RegisterError::InvalidToken);
                }
                if self.external_count() >= external_quota(self.local_alive_count()) {
                    return Err(RegisterError::QuotaExceeded);
                }
                true
            }
        };
        if self.alive.contains_key(&req.mystic_id) {
            return Err(RegisterError::AlreadyRegistered);
        }
        if self.abyss.remove(&req.mystic_id).is_some() {
            self.resurrection_log.push((req.mystic_id.clone(), now));
        }
        self.alive.insert(
            req.mystic_id.clone(),
            AliveEntry { position: req.position, last_charm_ack: now, external },
        );
        Ok(RegisterAckBody {
            circle_id: self.cfg.circle_id.clone(),
            watchtower_id: self.cfg.id.clone(),
            mystic_id: req.mystic_id.clone(),
            alive: self.membership(),
        })
    }

    /// Record one hash report. Returns true when this report opened a new
    /// round (the caller schedules the round-close timer).
    pub fn record_report(&mut self, report: HashReportBody) -> bool {
        self.reports.push(report);
        if self.round_open {
            false
        } else {
            self.round_open = true;
            true
        }
    }

    /// Order the round's reports by timestamp descending (ties: smallest hex)
    /// and keep the most recent hash as canonical. Returns the hash and the
    /// reporters to notify.
    pub fn select_canonical_hash(&mut self) -> Result<(Hash256, Vec<NodeId>), EmptyRound> {
        if self.reports.is_empty() {
            self.round_open = false;
            return Err(EmptyRound);
        }
        let mut ordered: Vec<&HashReportBody> = self.reports.iter().collect();
        ordered.sort_by(|a, b| {
            b.reported_at
                .cmp(&a.reported_at)
                .then_with(|| a.block_hash.to_hex().cmp(&b.block_hash.to_hex()))
        });
        let selected = ordered[0].block_hash;
        self.canonical_hash = Some(selected);
        let mut reporters: Vec<NodeId> = self.reports.iter().map(|r| r.mystic_id.clone()).collect();
        reporters.sort();
        reporters.dedup();
        self.reports.clear();
        self.round_open = false;
        Ok((selected, reporters))
    }

    /// Sample min(k, |alive|) distinct Mystics for a random audit.
    pub fn begin_audit(&mut self, k: usize, now: u64) -> Result<Vec<NodeId>, AuditError> {
        let _ = now;
        if self.canonical_hash.is_none() {
            return Err(AuditError::NoCanonicalHash);
        }
        let ids: Vec<NodeId> = self.alive.keys().cloned().collect();
        let sampled: Vec<NodeId> =
            ids.choose_multiple(&mut self.audit_rng, k.min(ids.len())).cloned().collect();
        let round = self.next_audit_round;
        self.next_audit_round += 1;
        self.audit = Some(AuditRound {
            id: round,
            expected: sampled.iter().cloned().collect(),
            replies: BTreeMap::new(),
        });
        Ok(sampled)
    }

    pub fn audit_round_id(&self) -> Option<u64> {
        self.audit.as_ref().map(|a| a.id)
    }

    /// Record one audit reply; returns the verdict once every sampled Mystic
    /// has answered.
    pub fn record_audit_reply(&mut self, reply: &AuditReplyBody) -> Option<AuditVerdict> {
        self.last_tips.insert(reply.mystic_id.clone(), reply.tip_hash);
        let audit = self.audit.as_mut()?;
        if !audit.expected.contains(&reply.mystic_id) {
            return None;
        }
        audit.replies.insert(reply.mystic_id.clone(), reply.tip_hash);
        if audit.replies.len() == audit.expected.len() {
            return Some(self.finalize_audit());
        }
        None
    }

    /// Close an audit round that timed out; silent Mystics become suspects.
    pub fn audit_timeout(&mut self, round: u64) -> Option<AuditVerdict> {
        if self.audit.as_ref().map(|a| a.id) != Some(round) {
            return None;
        }
        Some(self.finalize_audit())
    }

    fn finalize_audit(&mut self) -> AuditVerdict {
        let audit = self.audit.take().expect("finalize only with an open round");
        let canonical = self.canonical_hash.expect("audits require a canonical hash");
        let mut suspects: Vec<NodeId> = audit
            .expected
            .iter()
            .filter(|id| audit.replies.get(*id) != Some(&canonical))
            .cloned()
            .collect();
        suspects.sort();
        let passed = suspects.is_empty();
        if passed {
            self.audits_passed += 1;
        } else {
            self.audits_failed += 1;
            self.audit_suspects += suspects.len() as u64;
        }
        AuditVerdict { round: audit.id, passed, suspects }
    }

    /// Pick who re-gossips the canonical block to a suspect: the nearest alive
    /// non-suspect whose last reply matched the canonical hash.
    pub fn resync_source_for(&self, suspect: &NodeId) -> Option<NodeId> {
        let canonical = self.canonical_hash?;
        let suspect_pos = self.alive.get(suspect).map(|e| e.position)?;
        self.alive
            .iter()
            .filter(|(id, _)| *id != suspect)
            .filter(|(id, _)| self.last_tips.get(*id) == Some(&canonical))
            .min_by(|(a_id, a), (b_id, b)| {
                let da = suspect_pos.distance_km(&a.position);
                let db = suspect_pos.distance_km(&b.position);
                da.total_cmp(&db).then_with(|| a_id.cmp(b_id))
            })
            .map(|(id, _)| id.clone())
    }

    /// Liveness sweep: members whose last charm ack is older than two
    /// intervals cross the abyss; everyone still alive gets pinged.
    pub fn charm_cycle(&mut self, now: u64) -> (Vec<NodeId>, Vec<NodeId>) {
        let deadline = LIVENESS_TIMEOUT_FACTOR * self.cfg.charm_interval_s;
        let stale: Vec<NodeId> = self
            .alive
            .iter()
            .filter(|(_, e)| now.saturating_sub(e.last_charm_ack) > deadline)
            .map(|(id, _)| id.clone())
            .collect();
        for id in &stale {
            let entry = self.alive.remove(id).expect("stale ids come from alive");
            self.abyss.insert(
                id.clone(),
                AbyssEntry {
                    died_at: now,
                    last_known_tip: self.last_tips.get(id).copied().unwrap_or(Hash256::ZERO),
                    position: entry.position,
                    external: entry.external,
                },
            );
            self.abyss_log.push((id.clone(), now));
        }
        let pings: Vec<NodeId> = self.alive.keys().cloned().collect();
        (pings, stale)
    }

    pub fn record_charm_ack(&mut self, ack: &CharmAckBody, now: u64) {
        if let Some(entry) = self.alive.get_mut(&ack.mystic_id) {
            entry.last_charm_ack = now;
        }
    }

    /// Issue a fresh inter-circle token to a known foreign Watchtower.
    pub fn issue_token(
        &mut self,
        req: &TokenRequestBody,
        now: u64,
    ) -> Result<TokenGrantBody, TokenError> {
        if !self.cfg.foreign_watchtowers.contains(&req.requester_watchtower) {
            return Err(TokenError::UnknownRequester);
        }
        let grant = self.mint_token(req.requester_watchtower.clone(), self.cfg.token_ttl_s, now);
        Ok(grant)
    }

    fn mint_token(&mut self, bearer: NodeId, ttl_s: u64, now: u64) -> TokenGrantBody {
        let mut bytes = [0u8; 32];
        self.token_rng.fill(&mut bytes);
        let token_id = hex::encode(bytes);
        self.issued_tokens.push(InterCircleToken {
            token_id: token_id.clone(),
            issuer_circle: self.cfg.circle_id.clone(),
            bearer_watchtower: bearer,
            issued_at: now,
            ttl_s,
            revoked: false,
        });
        TokenGrantBody { token_id, issued_at: now, expires_at: now + ttl_s }
    }

    pub fn validate_token(&self, token_id: &str, now: u64) -> bool {
        self.issued_tokens.iter().any(|t| t.token_id == token_id && t.is_valid(now))
    }

    /// Exchange a still-valid token for one lasting `window_minutes`; the old
    /// token is revoked.
    pub fn renew_token(
        &mut self,
        req: &TokenRenewBody,
        now: u64,
    ) -> Result<TokenGrantBody, TokenError> {
        if req.window_minutes <= 0 {
            return Err(TokenError::InvalidWindow);
        }
        let current = self
            .issued_tokens
            .iter_mut()
            .find(|t| t.token_id == req.token_id && t.is_valid(now))
            .ok_or(TokenError::ExpiredToken)?;
        current.revoked = true;
        let bearer = current.bearer_watchtower.clone();
        Ok(self.mint_token(bearer, req.window_minutes as u64 * 60, now))
    }

    /// Revoke by id. Idempotent: revoking twice still reports Revoked.
    pub fn revoke_token(&mut self, token_id: &str) -> Option<()> {
        let token = self.issued_tokens.iter_mut().find(|t| t.token_id == token_id)?;
        token.revoked = true;
        Some(())
    }

    fn drain_timers(&mut self, ctx: &mut EmitCtx) {
        for (at, kind) in std::mem::take(&mut self.timer_requests) {
            ctx.timer_at(at, kind);
        }
    }

    fn membership_update(&mut self) -> WireMessage {
        let corr = self.next_corr();
        WireMessage::new(
            corr,
            Body::MembershipUpdate(MembershipUpdateBody {
                circle_id: self.cfg.circle_id.clone(),
                alive: self.membership(),
            }),
        )
    }

    /// Emit audit requests for a fresh round and arm its timeout.
    fn audit_emissions(&mut self, now: u64) -> Vec<Outbound> {
        let Ok(sampled) = self.begin_audit(self.cfg.audit_sample, now) else {
            return Vec::new();
        };
        let round = self.audit_round_id().expect("round just opened");
        self.timer_requests
            .push((now + self.cfg.audit_timeout_s, TimerKind::AuditTimeout { round }));
        sampled
            .into_iter()
            .map(|id| {
                let corr = self.next_corr();
                Outbound::to(
                    id,
                    WireMessage::new(
                        corr,
                        Body::AuditRequest(AuditRequestBody { watchtower_id: self.cfg.id.clone() }),
                    ),
                )
            })
            .collect()
    }

    fn verdict_emissions(&mut self, verdict: AuditVerdict) -> Vec<Outbound> {
        let mut out = Vec::new();
        let Some(canonical) = self.canonical_hash else {
            return out;
        };
        for suspect in &verdict.suspects {
            if let Some(source) = self.resync_source_for(suspect) {
                let corr = self.next_corr();
                out.push(Outbound::to(
                    source,
                    WireMessage::new(
                        corr,
                        Body::ResyncRequest(ResyncRequestBody {
                            target_mystic: suspect.clone(),
                            block_hash: canonical,
                        }),
                    ),
                ));
            }
        }
        out
    }
}

impl WireHandler for Watchtower {
    fn wire_id(&self) -> &NodeId {
        &self.cfg.id
    }

    fn handle_wire(&mut self, message: &WireMessage, ctx: &DispatchCtx) -> Option<HandleOutput> {
        let corr = message.correlation_id.clone();
        let now = ctx.now;
        let output = match &message.body {
            Body::Register(req) => match self.register_mystic(req, now) {
                Ok(ack) => {
                    let update = self.membership_update();
                    let mut output =
                        HandleOutput::respond(WireMessage::new(corr, Body::RegisterAck(ack)));
                    output = output.with(Outbound::broadcast(update));
                    output
                }
                Err(e) => {
                    let code = match e {
                        RegisterError::BadCredentials => ErrorCode::BadCredentials,
                        RegisterError::AlreadyRegistered => ErrorCode::AlreadyRegistered,
                        RegisterError::InvalidToken => ErrorCode::InvalidToken,
                        RegisterError::QuotaExceeded => ErrorCode::QuotaExceeded,
                    };
                    HandleOutput::respond(WireMessage::error(corr, code, e.to_string()))
                }
            },
            Body::HashReport(report) => {
                if self.record_report(report.clone()) {
                    self.timer_requests
                        .push((now + self.cfg.hash_round_window_s, TimerKind::HashRoundClose));
                }
                HandleOutput::none()
            }
            Body::CharmAck(ack) => {
                self.record_charm_ack(ack, now);
                HandleOutput::none()
            }
            Body::AuditReply(reply) => match self.record_audit_reply(reply) {
                Some(verdict) => {
                    let mut output = HandleOutput::none();
                    for emission in self.verdict_emissions(verdict) {
                        output = output.with(emission);
                    }
                    output
                }
                None => HandleOutput::none(),
            },
            Body::VerifiedNotice(notice) => {
                if self.canonical_hash == Some(notice.block_hash) {
                    let mut output = HandleOutput::none();
                    for emission in self.audit_emissions(now) {
                        output = output.with(emission);
                    }
                    output
                } else {
                    // Quorum can complete before the report round closes;
                    // remember the hash and audit once canonical is selected.
                    self.pending_audit = Some(notice.block_hash);
                    HandleOutput::none()
                }
            }
            Body::RevokeNotice(notice) => {
                if self.canonical_hash == Some(notice.block_hash) {
                    self.canonical_hash = None;
                }
                if self.pending_audit == Some(notice.block_hash) {
                    self.pending_audit = None;
                }
                HandleOutput::none()
            }
            Body::TokenRequest(req) => match self.issue_token(req, now) {
                Ok(grant) => HandleOutput::respond(WireMessage::new(corr, Body::TokenGrant(grant))),
                Err(e) => HandleOutput::respond(WireMessage::error(
                    corr,
                    ErrorCode::UnknownRequester,
                    e.to_string(),
                )),
            },
            Body::TokenRenew(req) => match self.renew_token(req, now) {
                Ok(grant) => HandleOutput::respond(WireMessage::new(corr, Body::TokenGrant(grant))),
                Err(e) => {
                    let code = match e {
                        TokenError::InvalidWindow => ErrorCode::InvalidWindow,
                        _ => ErrorCode::ExpiredToken,
                    };
                    HandleOutput::respond(WireMessage::error(corr, code, e.to_string()))
                }
            },
            Body::TokenRevoke(req) => match self.revoke_token(&req.token_id) {
                Some(()) => HandleOutput::respond(WireMessage::new(
                    corr,
                    Body::TokenRevoked(TokenRevokedBody { token_id: req.token_id.clone() }),
                )),
                None => HandleOutput::respond(WireMessage::error(
                    corr,
                    ErrorCode::NotFound,
                    format!("no token {}", req.token_id),
                )),
            },
            Body::Error(_) | Body::DiscoverProbe(_) => HandleOutput::none(),
            _ => return None,
        };
        Some(output)
    }
}

impl SimNode for Watchtower {
    fn id(&self) -> &NodeId {
        &self.cfg.id
    }

    fn position(&self, _now: u64) -> Point {
        self.cfg.position
    }

    fn on_start(&mut self, ctx: &mut EmitCtx) {
        ctx.timer_in(self.cfg.charm_interval_s, TimerKind::CharmCycle);
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
                }
                self.drain_timers(ctx);
            }
            SimMessage::Timer(TimerKind::CharmCycle) => {
                let now = ctx.now();
                let (pings, abyssed) = self.charm_cycle(now);
                for id in pings {
                    let corr = self.next_corr();
                    ctx.send(
                        id,
                        WireMessage::new(
                            corr,
                            Body::CharmPing(CharmPingBody {
                                watchtower_id: self.cfg.id.clone(),
                                sent_at: now,
                            }),
                        ),
                    );
                }
                if !abyssed.is_empty() {
                    let update = self.membership_update();
                    ctx.broadcast(update);
                }
                ctx.timer_in(self.cfg.charm_interval_s, TimerKind::CharmCycle);
            }
            SimMessage::Timer(TimerKind::HashRoundClose) => {
                if let Ok((hash, reporters)) = self.select_canonical_hash() {
                    for reporter in reporters {
                        let corr = self.next_corr();
                        ctx.send(
                            reporter,
                            WireMessage::new(
                                corr,
                                Body::CanonicalHash(CanonicalHashBody {
                                    watchtower_id: self.cfg.id.clone(),
                                    block_hash: hash,
                                }),
                            ),
                        );
                    }
                    if self.pending_audit.take() == Some(hash) {
                        for outbound in self.audit_emissions(ctx.now()) {
                            match outbound.target {
                                crate::wire::OutboundTarget::Node(dst) => {
                                    ctx.send(dst, outbound.message)
                                }
                                crate::wire::OutboundTarget::Broadcast => {
                                    ctx.broadcast(outbound.message)
                                }
                            }
                        }
                        self.drain_timers(ctx);
                    }
                }
            }
            SimMessage::Timer(TimerKind::AuditTimeout { round }) => {
                if let Some(verdict) = self.audit_timeout(*round) {
                    for outbound in self.verdict_emissions(verdict) {
                        match outbound.target {
                            crate::wire::OutboundTarget::Node(dst) => ctx.send(dst, outbound.message),
                            crate::wire::OutboundTarget::Broadcast => ctx.broadcast(outbound.message),
                        }
                    }
                }
            }
            SimMessage::Timer(_) => {}
        }
    }
}
