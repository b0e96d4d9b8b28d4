//! Proof-of-work mining and block verification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::NodeId;

use super::block::{compute_block_hash, Block, BlockHeader, Chain};
use super::hash::sha256;
use super::merkle::ancestor_merkle_root;

/// Desk-scale difficulty bound, in leading zero bits.
pub const MAX_DIFFICULTY: u8 = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MineError {
    #[error("difficulty {0} exceeds the maximum of {MAX_DIFFICULTY}")]
    DifficultyTooHigh(u8),
}

/// Why a block failed verification, ordered by the check sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    HeightMismatch,
    PrevHashMismatch,
    PowFailure,
    PayloadHashMismatch,
    /// The stored ancestor Merkle root does not recompute: integrity loss.
    MerkleMismatch,
    TimestampRegression,
    /// Recomputed tip differs from an externally supplied commitment.
    TipMismatch,
}

impl InvalidReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            InvalidReason::HeightMismatch => "height_mismatch",
            InvalidReason::PrevHashMismatch => "prev_hash_mismatch",
            InvalidReason::PowFailure => "pow_failure",
            InvalidReason::PayloadHashMismatch => "payload_hash_mismatch",
            InvalidReason::MerkleMismatch => "merkle_mismatch",
            InvalidReason::TimestampRegression => "timestamp_regression",
            InvalidReason::TipMismatch => "tip_mismatch",
        }
    }
}

impl std::fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerificationOutcome {
    Valid,
    Invalid(InvalidReason),
}

impl VerificationOutcome {
    pub fn is_valid(&self) -> bool {
        matches!(self, VerificationOutcome::Valid)
    }
}

/// Mine the next block for `chain`, searching nonces in ascending order from 0.
///
/// Mining is deterministic: identical (chain, payload, difficulty, timestamp,
/// origin) always produce the identical block, and the returned nonce is the
/// smallest that satisfies the difficulty.
pub fn mine_block(
    chain: &Chain,
    payload_ciphertext: Vec<u8>,
    difficulty: u8,
    now: u64,
    origin: NodeId,
) -> Result<Block, MineError> {
    if difficulty > MAX_DIFFICULTY {
        return Err(MineError::DifficultyTooHigh(difficulty));
    }
    let height = chain.len();
    let mut header = BlockHeader {
        height,
        prev_hash: chain.tip_hash(),
        timestamp: now,
        difficulty,
        ancestor_merkle_root: ancestor_merkle_root(chain, height)
            .expect("next height is always in range"),
        payload_hash: sha256(&payload_ciphertext),
        nonce: 0,
    };
    loop {
        if compute_block_hash(&header).leading_zero_bits() >= u32::from(difficulty) {
            return Ok(Block {
                header,
                payload_ciphertext,
                origin_mystic: origin,
            });
        }
        header.nonce = header
            .nonce
            .checked_add(1)
            .expect("nonce space exhausted below difficulty 32");
    }
}

/// Verify `block` as the next block of `chain`.
///
/// Valid iff, checked in order: the block links to the tip (height and
/// prev_hash), the hash satisfies the stated difficulty, the payload hash
/// matches the ciphertext, the ancestor Merkle root recomputes identically,
/// and the timestamp does not regress. The first failing check is reported.
pub fn verify_block(chain: &Chain, block: &Block) -> VerificationOutcome {
    use VerificationOutcome::Invalid;
    let header = &block.header;
    if header.height != chain.len() {
        return Invalid(InvalidReason::HeightMismatch);
    }
    if header.prev_hash != chain.tip_hash() {
        return Invalid(InvalidReason::PrevHashMismatch);
    }
    if compute_block_hash(header).leading_zero_bits() < u32::from(header.difficulty) {
        return Invalid(InvalidReason::PowFailure);
    }
    if sha256(&block.payload_ciphertext) != header.payload_hash {
        return Invalid(InvalidReason::PayloadHashMismatch);
    }
    let expected_root =
        ancestor_merkle_root(chain, chain.len()).expect("next height is always in range");
    if header.ancestor_merkle_root != expected_root {
        return Invalid(InvalidReason::MerkleMismatch);
    }
    if header.timestamp < chain.tip_timestamp() {
        return Invalid(InvalidReason::TimestampRegression);
    }
    VerificationOutcome::Valid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::hash::Hash256;
    use crate::ledger::merkle::merkle_root;

    fn origin() -> NodeId {
        NodeId::new("m1")
    }

    fn grow_chain(blocks: u64, difficulty: u8) -> Chain {
        let mut chain = Chain::new();
        for i in 0..blocks {
            let block = mine_block(
                &chain,
                format!("payload-{i}").into_bytes(),
                difficulty,
                i * 10,
                origin(),
            )
            .unwrap();
            assert!(verify_block(&chain, &block).is_valid());
            chain.push_linked(block).unwrap();
        }
        chain
    }

    // Independent ascending brute-force over the canonical 121-byte layout,
    // built here without going through BlockHeader::canonical_bytes.
    fn oracle_nonce(header: &BlockHeader, difficulty: u8) -> u64 {
        let mut nonce = 0u64;
        loop {
            let mut buf = Vec::with_capacity(121);
            buf.extend_from_slice(&header.height.to_be_bytes());
            buf.extend_from_slice(header.prev_hash.as_bytes());
            buf.extend_from_slice(&header.timestamp.to_be_bytes());
            buf.push(header.difficulty);
            buf.extend_from_slice(header.ancestor_merkle_root.as_bytes());
            buf.extend_from_slice(header.payload_hash.as_bytes());
            buf.extend_from_slice(&nonce.to_be_bytes());
            let digest = sha2::Sha256::digest(&buf);
            let mut zeros = 0u32;
            for byte in digest.iter() {
                if *byte == 0 {
                    zeros += 8;
                } else {
                    zeros += byte.leading_zeros();
                    break;
                }
            }
            if zeros >= u32::from(difficulty) {
                return nonce;
            }
            nonce += 1;
        }
    }
    use sha2::Digest;

    #[test]
    fn difficulty_zero_accepts_nonce_zero() {
        let chain = Chain::new();
        let block = mine_block(&chain, b"p".to_vec(), 0, 0, origin()).unwrap();
        assert_eq!(block.header.nonce, 0);
        assert!(verify_block(&chain, &block).is_valid());
    }

    #[test]
    fn difficulty_cap_enforced() {
        let chain = Chain::new();
        assert_eq!(
            mine_block(&chain, vec![], 33, 0, origin()).unwrap_err(),
            MineError::DifficultyTooHigh(33)
        );
    }

    #[test]
    fn mined_nonce_matches_brute_force_oracle() {
        let chain = grow_chain(2, 0);
        let block = mine_block(&chain, b"oracle payload".to_vec(), 8, 100, origin()).unwrap();
        let expected = oracle_nonce(&block.header, 8);
        assert_eq!(block.header.nonce, expected);
        assert!(block.hash().leading_zero_bits() >= 8);
    }

    #[test]
    fn mining_is_deterministic() {
        let chain = grow_chain(3, 4);
        let a = mine_block(&chain, b"same".to_vec(), 6, 77, origin()).unwrap();
        let b = mine_block(&chain, b"same".to_vec(), 6, 77, origin()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mined_block_passes_verify() {
        let chain = grow_chain(4, 4);
        let block = mine_block(&chain, b"fresh".to_vec(), 4, 1000, origin()).unwrap();
        assert_eq!(verify_block(&chain, &block), VerificationOutcome::Valid);
    }

    #[test]
    fn ancestor_root_for_height_seven_uses_heights_one_through_six() {
        let chain = grow_chain(7, 0);
        // Oracle: Merkle over the cached hashes of heights 1..=6, oldest first.
        let leaves: Vec<Hash256> = (1..7).map(|h| chain.hash_at(h).unwrap()).collect();
        assert_eq!(leaves.len(), 6);
        let expected = merkle_root(&leaves);
        assert_eq!(ancestor_merkle_root(&chain, 7).unwrap(), expected);
        // Genesis is outside the window.
        let with_genesis: Vec<Hash256> = (0..7).map(|h| chain.hash_at(h).unwrap()).collect();
        assert_ne!(merkle_root(&with_genesis), expected);
    }

    #[test]
    fn ancestor_root_out_of_range() {
        let chain = grow_chain(2, 0);
        assert!(ancestor_merkle_root(&chain, 3).is_err());
        assert!(ancestor_merkle_root(&chain, 2).is_ok());
    }

    #[test]
    fn zero_nonce_fails_pow_at_difficulty_eight() {
        let chain = Chain::new();
        let mut block = mine_block(&chain, b"pow".to_vec(), 8, 0, origin()).unwrap();
        assert_ne!(block.header.nonce, 0, "a zero nonce satisfying d=8 would be a 2^-8 fluke");
        block.header.nonce = 0;
        // Confirm the zeroed header really fails the bit test before asserting the reason.
        assert!(compute_block_hash(&block.header).leading_zero_bits() < 8);
        assert_eq!(
            verify_block(&chain, &block),
            VerificationOutcome::Invalid(InvalidReason::PowFailure)
        );
    }

    #[test]
    fn mutated_ancestor_hash_reports_merkle_mismatch() {
        let chain = grow_chain(5, 0);
        let block = mine_block(&chain, b"tail".to_vec(), 0, 500, origin()).unwrap();
        let mut tampered = block.clone();
        let mut bytes = *tampered.header.ancestor_merkle_root.as_bytes();
        bytes[7] ^= 0x01;
        tampered.header.ancestor_merkle_root = Hash256::from_bytes(bytes);
        assert_eq!(
            verify_block(&chain, &tampered),
            VerificationOutcome::Invalid(InvalidReason::MerkleMismatch)
        );
    }

    #[test]
    fn timestamp_regression_detected() {
        let chain = grow_chain(2, 0);
        let block = mine_block(&chain, b"late".to_vec(), 0, 5, origin()).unwrap();
        assert_eq!(
            verify_block(&chain, &block),
            VerificationOutcome::Invalid(InvalidReason::TimestampRegression)
        );
    }

    #[test]
    fn appending_valid_blocks_preserves_chain_invariants() {
        let chain = grow_chain(10, 2);
        for (i, block) in chain.blocks().iter().enumerate() {
            assert_eq!(block.header.height, i as u64);
            if i > 0 {
                assert_eq!(block.header.prev_hash, chain.hash_at(i as u64 - 1).unwrap());
                assert!(
                    block.header.timestamp >= chain.block_at(i as u64 - 1).unwrap().header.timestamp
                );
            } else {
                assert_eq!(block.header.prev_hash, Hash256::ZERO);
            }
            assert!(block.hash().leading_zero_bits() >= u32::from(block.header.difficulty));
        }
    }
}
