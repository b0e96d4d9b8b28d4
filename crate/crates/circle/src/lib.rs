//! Ground-station ledger protocol for suborbital-device telemetry.
//!
//! A *Circle* is the network of ground nodes serving one suborbital device
//! (a weather balloon, for instance). The gatekeeper node — the *Watchtower* —
//! admits working nodes (*Mystics*), selects the canonical hash for each
//! insertion round, audits replicas, tracks liveness through periodic *charm*
//! pings, and exchanges revocable trust tokens with the Watchtowers of other
//! circles. Mystics ingest telemetry into a proof-of-work chain, gossip new
//! blocks to their nearest peers, and finalize an insertion once 80% of the
//! circle has verified it, earning a *Sparkling* reward per verification.
//!
//! Everything runs inside a deterministic discrete-event simulator: virtual
//! clock, distance-based latency, drop/partition fault injection, and a
//! reproducible JSON-lines event trace. The `circle` binary loads scenario
//! files, runs them to completion, and emits machine-readable metrics.
//!
//! Start with the runnable examples (`cargo run --example demo_circle`) or the
//! [`scenario`] module for end-to-end entry points.

pub mod ledger;
pub mod mystic;
pub mod satellite;
pub mod scenario;
pub mod sim;
pub mod store;
pub mod wire;
pub mod types;
pub mod watchtower;
