//! Block and chain structures with the canonical bit-exact header serialization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::NodeId;

use super::hash::{sha256, Hash256};

/// Byte length of the canonical header serialization.
pub const HEADER_WIRE_LEN: usize = 121;

/// Header of one telemetry block, sealed by proof of work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Hash256,
    /// Virtual seconds since scenario start.
    pub timestamp: u64,
    /// Required leading zero bits of the block hash.
    pub difficulty: u8,
    /// Merkle root over the hashes of up to six ancestor blocks.
    pub ancestor_merkle_root: Hash256,
    /// SHA-256 of the sealed payload bytes.
    pub payload_hash: Hash256,
    pub nonce: u64,
}

impl BlockHeader {
    /// Canonical serialization, the wire and storage format for hashing:
    /// `height(8B BE) ‖ prev_hash(32B) ‖ timestamp(8B BE) ‖ difficulty(1B) ‖
    /// ancestor_merkle_root(32B) ‖ payload_hash(32B) ‖ nonce(8B BE)`.
    pub fn canonical_bytes(&self) -> [u8; HEADER_WIRE_LEN] {
        let mut out = [0u8; HEADER_WIRE_LEN];
        out[0..8].copy_from_slice(&self.height.to_be_bytes());
        out[8..40].copy_from_slice(self.prev_hash.as_bytes());
        out[40..48].copy_from_slice(&self.timestamp.to_be_bytes());
        out[48] = self.difficulty;
        out[49..81].copy_from_slice(self.ancestor_merkle_root.as_bytes());
        out[81..113].copy_from_slice(self.payload_hash.as_bytes());
        out[113..121].copy_from_slice(&self.nonce.to_be_bytes());
        out
    }
}

/// SHA-256 over the canonical header serialization.
pub fn compute_block_hash(header: &BlockHeader) -> Hash256 {
    sha256(&header.canonical_bytes())
}

/// One telemetry record: header plus the sealed payload and its origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub header: BlockHeader,
    #[serde(with = "hex_bytes")]
    pub payload_ciphertext: Vec<u8>,
    pub origin_mystic: NodeId,
}

impl Block {
    pub fn hash(&self) -> Hash256 {
        compute_block_hash(&self.header)
    }
}

/// Hex (lowercase) serde representation for raw byte strings.
pub mod hex_bytes {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(deserializer)?;
        hex::decode(&s).map_err(de::Error::custom)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("expected height {expected}, got {got}")]
    HeightMismatch { expected: u64, got: u64 },
    #[error("block prev_hash does not match chain tip")]
    PrevHashMismatch,
}

/// An ordered chain of blocks. The genesis block has height 0 and an all-zero
/// prev_hash; an empty chain exposes [`Hash256::ZERO`] as its tip.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Chain {
    blocks: Vec<Block>,
    hashes: Vec<Hash256>,
}

impl Chain {
    pub fn new() -> Self {
        Chain::default()
    }

    pub fn len(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block_at(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize)
    }

    /// Cached hash of the block at `height`.
    pub fn hash_at(&self, height: u64) -> Option<Hash256> {
        self.hashes.get(height as usize).copied()
    }

    pub fn tip(&self) -> Option<&Block> {
        self.blocks.last()
    }

    /// Hash of the last block, or the all-zero hash for an empty chain.
    pub fn tip_hash(&self) -> Hash256 {
        self.hashes.last().copied().unwrap_or(Hash256::ZERO)
    }

    /// Timestamp of the last block, or 0 for an empty chain.
    pub fn tip_timestamp(&self) -> u64 {
        self.blocks.last().map(|b| b.header.timestamp).unwrap_or(0)
    }

    /// Append a block checking only linkage (height and prev_hash). Full
    /// verification lives in [`super::pow::verify_block`]; reload paths and
    /// tests use this directly.
    pub fn push_linked(&mut self, block: Block) -> Result<(), ChainError> {
        if block.header.height != self.len() {
            return Err(ChainError::HeightMismatch {
                expected: self.len(),
                got: block.header.height,
            });
        }
        if block.header.prev_hash != self.tip_hash() {
            return Err(ChainError::PrevHashMismatch);
        }
        self.hashes.push(block.hash());
        self.blocks.push(block);
        Ok(())
    }

    /// Remove and return the tip block (rollback of a revoked insertion).
    pub fn pop_tip(&mut self) -> Option<Block> {
        self.hashes.pop();
        self.blocks.pop()
    }
}
