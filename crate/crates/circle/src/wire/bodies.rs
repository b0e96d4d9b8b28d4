//! Typed JSON bodies for every wire message kind. Unknown fields are rejected
//! everywhere so the schemas stay closed.

use serde::{Deserialize, Serialize};

use crate::ledger::{Block, Hash256};
use crate::satellite::SensorPayload;
use crate::types::{CircleId, NodeId, Point};

/// One alive circle member as seen by the Watchtower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberInfo {
    pub id: NodeId,
    pub position: Point,
    pub external: bool,
}

/// Registration credential: the circle's shared secret for local Mystics, or
/// an inter-circle token id for external ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Credential {
    Secret {
        secret: String,
    },
    Token {
        token_id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterBody {
    pub circle_id: CircleId,
    pub mystic_id: NodeId,
    pub position: Point,
    pub credential: Credential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterAckBody {
    pub circle_id: CircleId,
    pub watchtower_id: NodeId,
    pub mystic_id: NodeId,
    pub alive: Vec<MemberInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembershipUpdateBody {
    pub circle_id: CircleId,
    pub alive: Vec<MemberInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSubmitBody {
    pub circle_id: CircleId,
    pub circle_token: String,
    pub payload: SensorPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataAcceptBody {
    pub mystic_id: NodeId,
    pub block_hash: Hash256,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HashReportBody {
    pub mystic_id: NodeId,
    pub block_hash: Hash256,
    pub reported_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalHashBody {
    pub watchtower_id: NodeId,
    pub block_hash: Hash256,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GossipBlockBody {
    pub block: Block,
    /// Hash the sender claims for the block; receivers recompute and match it.
    pub block_hash: Hash256,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GossipAckBody {
    pub mystic_id: NodeId,
    pub block_hash: Hash256,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GossipRejectBody {
    pub mystic_id: NodeId,
    pub block_hash: Hash256,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifiedNoticeBody {
    pub origin: NodeId,
    pub block_hash: Hash256,
    pub ack_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevokeNoticeBody {
    pub origin: NodeId,
    pub block_hash: Hash256,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharmPingBody {
    pub watchtower_id: NodeId,
    pub sent_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharmAckBody {
    pub mystic_id: NodeId,
    pub acked_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditRequestBody {
    pub watchtower_id: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditReplyBody {
    pub mystic_id: NodeId,
    /// All-zero hash when the replica chain is still empty.
    pub tip_hash: Hash256,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenRequestBody {
    pub requester_watchtower: NodeId,
    pub requester_circle: CircleId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenGrantBody {
    pub token_id: String,
    pub issued_at: u64,
    pub expires_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenRenewBody {
    pub token_id: String,
    pub window_minutes: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenRevokeBody {
    pub token_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenRevokedBody {
    pub token_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResyncRequestBody {
    pub target_mystic: NodeId,
    pub block_hash: Hash256,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscoverProbeBody {
    pub satellite_id: NodeId,
    pub position: Point,
    pub sent_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscoverReplyBody {
    pub mystic_id: NodeId,
    pub position: Point,
    pub circle_id: CircleId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub code: String,
    pub detail: String,
}
