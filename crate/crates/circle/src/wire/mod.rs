//! Exact JSON message schemas and the canonical codec for every protocol
//! interaction: the simulated counterpart of the demo's web services.
//!
//! A message on the wire is one canonical JSON object
//! `{"body":{...},"correlation_id":"...","kind":"..."}` — sorted keys, no
//! insignificant whitespace, lowercase hex, UTF-8. `decode(encode(m)) == m`
//! for every well-formed message, and decoding validates the body against the
//! closed per-kind schema.

mod bodies;
mod dispatch;

use serde_json::Value;
use thiserror::Error;

pub use bodies::*;
pub use dispatch::{dispatch, DispatchCtx, HandleOutput, Outbound, OutboundTarget, WireHandler};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("unknown message kind {0:?}")]
    UnknownKind(String),
    #[error("schema violation in {kind}: {detail}")]
    SchemaViolation { kind: String, detail: String },
}

/// Stable error codes carried by `error` responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    TokenMismatch,
    QuotaExceeded,
    ExpiredToken,
    Busy,
    BadCredentials,
    AlreadyRegistered,
    InvalidToken,
    InvalidWindow,
    NotFound,
    UnknownRequester,
    UnknownSender,
    UnroutableKind,
    NoCanonicalHash,
}

impl ErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::TokenMismatch => "TOKEN_MISMATCH",
            ErrorCode::QuotaExceeded => "QUOTA_EXCEEDED",
            ErrorCode::ExpiredToken => "EXPIRED_TOKEN",
            ErrorCode::Busy => "BUSY",
            ErrorCode::BadCredentials => "BAD_CREDENTIALS",
            ErrorCode::AlreadyRegistered => "ALREADY_REGISTERED",
            ErrorCode::InvalidToken => "INVALID_TOKEN",
            ErrorCode::InvalidWindow => "INVALID_WINDOW",
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::UnknownRequester => "UNKNOWN_REQUESTER",
            ErrorCode::UnknownSender => "UNKNOWN_SENDER",
            ErrorCode::UnroutableKind => "UNROUTABLE_KIND",
            ErrorCode::NoCanonicalHash => "NO_CANONICAL_HASH",
        }
    }
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

macro_rules! message_kinds {
    ($( $variant:ident => $kind:literal, $body:ident ;)*) => {
        /// Closed registry of wire message kinds.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum MessageKind {
            $( $variant, )*
        }

        impl MessageKind {
            pub const ALL: &'static [MessageKind] = &[ $( MessageKind::$variant, )* ];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $( MessageKind::$variant => $kind, )*
                }
            }

            pub fn from_str(s: &str) -> Option<MessageKind> {
                match s {
                    $( $kind => Some(MessageKind::$variant), )*
                    _ => None,
                }
            }
        }

        /// A decoded message body, one variant per kind.
        #[derive(Debug, Clone, PartialEq)]
        pub enum Body {
            $( $variant($body), )*
        }

        impl Body {
            pub fn kind(&self) -> MessageKind {
                match self {
                    $( Body::$variant(_) => MessageKind::$variant, )*
                }
            }

            fn to_value(&self) -> Value {
                match self {
                    $( Body::$variant(b) => serde_json::to_value(b).expect("body serializes"), )*
                }
            }

            fn from_value(kind: MessageKind, value: Value) -> Result<Body, WireError> {
                let violation = |e: serde_json::Error| WireError::SchemaViolation {
                    kind: kind.as_str().to_string(),
                    detail: e.to_string(),
                };
                Ok(match kind {
                    $( MessageKind::$variant => Body::$variant(
                        serde_json::from_value::<$body>(value).map_err(violation)?,
                    ), )*
                })
            }
        }
    };
}

message_kinds! {
    Register => "register", RegisterBody;
    RegisterAck => "register_ack", RegisterAckBody;
    MembershipUpdate => "membership_update", MembershipUpdateBody;
    DataSubmit => "data_submit", DataSubmitBody;
    DataAccept => "data_accept", DataAcceptBody;
    HashReport => "hash_report", HashReportBody;
    CanonicalHash => "canonical_hash", CanonicalHashBody;
    GossipBlock => "gossip_block", GossipBlockBody;
    GossipAck => "gossip_ack", GossipAckBody;
    GossipReject => "gossip_reject", GossipRejectBody;
    VerifiedNotice => "verified_notice", VerifiedNoticeBody;
    RevokeNotice => "revoke_notice", RevokeNoticeBody;
    CharmPing => "charm_ping", CharmPingBody;
    CharmAck => "charm_ack", CharmAckBody;
    AuditRequest => "audit_request", AuditRequestBody;
    AuditReply => "audit_reply", AuditReplyBody;
    TokenRequest => "token_request", TokenRequestBody;
    TokenGrant => "token_grant", TokenGrantBody;
    TokenRenew => "token_renew", TokenRenewBody;
    TokenRevoke => "token_revoke", TokenRevokeBody;
    TokenRevoked => "token_revoked", TokenRevokedBody;
    ResyncRequest => "resync_request", ResyncRequestBody;
    DiscoverProbe => "discover_probe", DiscoverProbeBody;
    DiscoverReply => "discover_reply", DiscoverReplyBody;
    Error => "error", ErrorBody;
}

impl std::fmt::Display for MessageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One wire message: a kind-tagged body plus a correlation id echoed by
/// responses.
#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub correlation_id: String,
    pub body: Body,
}

impl WireMessage {
    pub fn new(correlation_id: impl Into<String>, body: Body) -> Self {
        WireMessage { correlation_id: correlation_id.into(), body }
    }

    pub fn kind(&self) -> MessageKind {
        self.body.kind()
    }

    pub fn error(correlation_id: impl Into<String>, code: ErrorCode, detail: impl Into<String>) -> Self {
        WireMessage::new(
            correlation_id,
            Body::Error(ErrorBody { code: code.as_str().to_string(), detail: detail.into() }),
        )
    }
}

/// Canonical JSON bytes of an already-built value. serde_json maps are
/// BTree-backed, so object keys come out sorted.
pub fn canonical_json(value: &Value) -> String {
    serde_json::to_string(value).expect("value serializes")
}

/// Encode a message to its canonical byte form.
pub fn encode(message: &WireMessage) -> Vec<u8> {
    let value = serde_json::json!({
        "kind": message.kind().as_str(),
        "correlation_id": message.correlation_id,
        "body": message.body.to_value(),
    });
    canonical_json(&value).into_bytes()
}

/// Decode and schema-validate canonical (or any equivalent) JSON bytes.
pub fn decode(bytes: &[u8]) -> Result<WireMessage, WireError> {
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| WireError::MalformedJson(e.to_string()))?;
    let Value::Object(mut map) = value else {
        return Err(WireError::MalformedJson("top level must be an object".into()));
    };
    let kind_value = map
        .remove("kind")
        .ok_or_else(|| WireError::MalformedJson("missing \"kind\"".into()))?;
    let Value::String(kind_str) = kind_value else {
        return Err(WireError::MalformedJson("\"kind\" must be a string".into()));
    };
    let kind = MessageKind::from_str(&kind_str).ok_or(WireError::UnknownKind(kind_str.clone()))?;
    let correlation_id = match map.remove("correlation_id") {
        Some(Value::String(s)) => s,
        Some(_) => return Err(WireError::MalformedJson("\"correlation_id\" must be a string".into())),
        None => return Err(WireError::MalformedJson("missing \"correlation_id\"".into())),
    };
    let body_value = map.remove("body").ok_or_else(|| WireError::SchemaViolation {
        kind: kind.as_str().to_string(),
        detail: "missing \"body\"".into(),
    })?;
    if let Some(extra) = map.keys().next() {
        return Err(WireError::SchemaViolation {
            kind: kind.as_str().to_string(),
            detail: format!("unknown top-level field {extra:?}"),
        });
    }
    let body = Body::from_value(kind, body_value)?;
    Ok(WireMessage { correlation_id, body })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::satellite::SensorPayload;
    use crate::types::CircleId;
    use std::collections::BTreeMap;

    fn sample_submit() -> WireMessage {
        let mut readings = BTreeMap::new();
        readings.insert("altitude_m".to_string(), 18250.125);
        readings.insert("pressure_hpa".to_string(), 71.25);
        readings.insert("temperature_c".to_string(), -41.5);
        WireMessage::new(
            "sat-1",
            Body::DataSubmit(DataSubmitBody {
                circle_id: CircleId::new("circle-a"),
                circle_token: "ab".repeat(32),
                payload: SensorPayload { readings, sequence: 0, sampled_at: 30 },
            }),
        )
    }

    // Frozen against an independent canonical-JSON oracle (sorted keys,
    // compact separators) over the same message.
    const GOLDEN_DATA_SUBMIT: &str = "{\"body\":{\"circle_id\":\"circle-a\",\"circle_token\":\"abababababababababababababababababababababababababababababababab\",\"payload\":{\"readings\":{\"altitude_m\":18250.125,\"pressure_hpa\":71.25,\"temperature_c\":-41.5},\"sampled_at\":30,\"sequence\":0}},\"correlation_id\":\"sat-1\",\"kind\":\"data_submit\"}";

    #[test]
    fn golden_data_submit_bytes() {
        let encoded = encode(&sample_submit());
        assert_eq!(std::str::from_utf8(&encoded).unwrap(), GOLDEN_DATA_SUBMIT);
    }

    #[test]
    fn round_trip_is_identity() {
        let msg = sample_submit();
        let decoded = decode(&encode(&msg)).unwrap();
        assert_eq!(decoded, msg);
        assert_eq!(encode(&decoded), encode(&msg));
    }

    #[test]
    fn key_order_does_not_matter_on_decode() {
        let reordered = "{\"kind\":\"data_submit\",\"correlation_id\":\"sat-1\",\"body\":{\"payload\":{\"sequence\":0,\"sampled_at\":30,\"readings\":{\"temperature_c\":-41.5,\"pressure_hpa\":71.25,\"altitude_m\":18250.125}},\"circle_token\":\"abababababababababababababababababababababababababababababababab\",\"circle_id\":\"circle-a\"}}";
        let decoded = decode(reordered.as_bytes()).unwrap();
        assert_eq!(std::str::from_utf8(&encode(&decoded)).unwrap(), GOLDEN_DATA_SUBMIT);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let bytes = b"{\"body\":{},\"correlation_id\":\"x\",\"kind\":\"bogus\"}";
        assert_eq!(decode(bytes).unwrap_err(), WireError::UnknownKind("bogus".into()));
    }

    #[test]
    fn malformed_json_is_rejected() {
        assert!(matches!(decode(b"{nope"), Err(WireError::MalformedJson(_))));
        assert!(matches!(decode(b"[1,2]"), Err(WireError::MalformedJson(_))));
    }

    #[test]
    fn missing_field_names_the_field() {
        let bytes = b"{\"body\":{\"circle_id\":\"c\",\"payload\":{\"readings\":{},\"sampled_at\":1,\"sequence\":0}},\"correlation_id\":\"x\",\"kind\":\"data_submit\"}";
        match decode(bytes).unwrap_err() {
            WireError::SchemaViolation { kind, detail } => {
                assert_eq!(kind, "data_submit");
                assert!(detail.contains("circle_token"), "detail was: {detail}");
            }
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn unknown_body_field_is_rejected() {
        let bytes = b"{\"body\":{\"acked_at\":1,\"mystic_id\":\"m1\",\"surprise\":true},\"correlation_id\":\"x\",\"kind\":\"charm_ack\"}";
        assert!(matches!(decode(bytes), Err(WireError::SchemaViolation { .. })));
    }

    #[test]
    fn kind_registry_is_closed_and_stable() {
        assert_eq!(MessageKind::ALL.len(), 25);
        for kind in MessageKind::ALL {
            assert_eq!(MessageKind::from_str(kind.as_str()), Some(*kind));
        }
        assert_eq!(MessageKind::from_str("data_submit"), Some(MessageKind::DataSubmit));
        assert_eq!(MessageKind::from_str("DATA_SUBMIT"), None);
    }
}
