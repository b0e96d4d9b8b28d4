//! Machine-readable run output.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::ledger::Hash256;
use crate::wire::canonical_json;

/// Aggregated outcome of one scenario run. Serializes canonically so equal
/// runs produce byte-identical files.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    pub scenario_seed: u64,
    /// Insertions that reached the quorum and were finalized.
    pub verified_blocks: u64,
    /// Insertions revoked by a reject.
    pub revoked_blocks: u64,
    /// Successful ingest calls (pending blocks created).
    pub ingests: u64,
    pub mean_verification_latency_virtual_s: f64,
    /// Ack count of each verified block, in verification order.
    pub quorum_ack_counts: Vec<u64>,
    /// Sparkling balance per Mystic at the end of the run.
    pub sparkling: BTreeMap<String, u64>,
    pub abyss_events: u64,
    pub resurrections: u64,
    pub audit_rounds: u64,
    pub audit_failures: u64,
    pub dropped_envelopes: u64,
    pub data_submits: u64,
    pub accepted_submits: u64,
    pub rejected_submits: u64,
    pub timed_out_submits: u64,
    pub no_mystic_passes: u64,
    pub canonical_hash: Option<Hash256>,
    /// Chain tip of every Mystic at the end of the run.
    pub mystic_tips: BTreeMap<String, Hash256>,
}

impl MetricsReport {
    /// Canonical JSON plus a trailing newline; the bytes written to disk.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("metrics serialize");
        let mut out = canonical_json(&value);
        out.push('\n');
        out
    }

    /// Every ingest must reach exactly one terminal state within the run.
    pub fn conserves_ingests(&self) -> bool {
        self.verified_blocks + self.revoked_blocks == self.ingests
    }
}
