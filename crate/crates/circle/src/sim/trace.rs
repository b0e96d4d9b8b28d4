//! Ordered event trace of a simulation run, serializable to JSON lines.

use serde::{Deserialize, Serialize};

use crate::types::NodeId;
use crate::wire::canonical_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryStatus {
    Delivered,
    Dropped,
}

/// One processed envelope. `kind` is the wire kind, or `timer:<name>` for
/// self-scheduled timers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub send_time: u64,
    pub deliver_time: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlation_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    pub status: DeliveryStatus,
}

/// The full ordered trace of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventTrace {
    records: Vec<TraceRecord>,
}

impl EventTrace {
    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn dropped_count(&self) -> u64 {
        self.records.iter().filter(|r| r.status == DeliveryStatus::Dropped).count() as u64
    }

    /// Delivered (or dropped) records of one wire kind.
    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a TraceRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    /// One canonical JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            let value = serde_json::to_value(record).expect("trace record serializes");
            out.push_str(&canonical_json(&value));
            out.push('\n');
        }
        out
    }

    /// Parse a trace back from its JSON-lines form.
    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let mut trace = EventTrace::default();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            trace.push(serde_json::from_str(line)?);
        }
        Ok(trace)
    }
}

/// Send-time ordering violation of the per-peer gossip throttle.
#[derive(Debug, Clone, PartialEq)]
pub struct ThrottleViolation {
    pub src: NodeId,
    pub dst: NodeId,
    pub first_send: u64,
    pub second_send: u64,
}

/// Audit a trace for the gossip throttle: for every ordered peer pair,
/// consecutive `gossip_block` sends must be at least `min_interval` apart.
pub fn audit_gossip_throttle(
    trace: &EventTrace,
    min_interval: u64,
) -> Result<(), ThrottleViolation> {
    use std::collections::BTreeMap;
    let mut sends: BTreeMap<(NodeId, NodeId), Vec<u64>> = BTreeMap::new();
    for record in trace.of_kind("gossip_block") {
        sends
            .entry((record.src.clone(), record.dst.clone()))
            .or_default()
            .push(record.send_time);
    }
    for ((src, dst), mut times) in sends {
        times.sort_unstable();
        for pair in times.windows(2) {
            if pair[1] - pair[0] < min_interval {
                return Err(ThrottleViolation {
                    src,
                    dst,
                    first_send: pair[0],
                    second_send: pair[1],
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seq: u64, send: u64, src: &str, dst: &str, kind: &str) -> TraceRecord {
        TraceRecord {
            seq,
            send_time: send,
            deliver_time: send + 1,
            src: NodeId::new(src),
            dst: NodeId::new(dst),
            kind: kind.to_string(),
            correlation_id: None,
            body: None,
            status: DeliveryStatus::Delivered,
        }
    }

    #[test]
    fn throttle_auditor_accepts_spaced_sends() {
        let mut trace = EventTrace::default();
        trace.push(record(0, 0, "m1", "m2", "gossip_block"));
        trace.push(record(1, 900, "m1", "m2", "gossip_block"));
        trace.push(record(2, 10, "m2", "m1", "gossip_block"));
        assert_eq!(audit_gossip_throttle(&trace, 900), Ok(()));
    }

    #[test]
    fn throttle_auditor_flags_close_sends_per_ordered_pair() {
        let mut trace = EventTrace::default();
        trace.push(record(0, 0, "m1", "m2", "gossip_block"));
        trace.push(record(1, 899, "m1", "m2", "gossip_block"));
        let violation = audit_gossip_throttle(&trace, 900).unwrap_err();
        assert_eq!(violation.first_send, 0);
        assert_eq!(violation.second_send, 899);
    }

    #[test]
    fn throttle_auditor_ignores_other_kinds() {
        let mut trace = EventTrace::default();
        trace.push(record(0, 0, "m1", "m2", "charm_ping"));
        trace.push(record(1, 1, "m1", "m2", "charm_ping"));
        assert_eq!(audit_gossip_throttle(&trace, 900), Ok(()));
    }

    #[test]
    fn jsonl_is_one_object_per_line() {
        let mut trace = EventTrace::default();
        trace.push(record(0, 0, "a", "b", "charm_ping"));
        trace.push(record(1, 5, "b", "a", "charm_ack"));
        let jsonl = trace.to_jsonl();
        assert_eq!(jsonl.lines().count(), 2);
        for line in jsonl.lines() {
            let value: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(value.get("seq").is_some());
        }
    }
}
