//! Merkle root over the hashes of the six most recent ancestor blocks.

use thiserror::Error;

use super::block::Chain;
use super::hash::{sha256, sha256_pair, Hash256};

/// How many ancestors feed the integrity root of each block.
pub const ANCESTOR_WINDOW: u64 = 6;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("height {height} out of range for chain of length {len}")]
pub struct HeightOutOfRange {
    pub height: u64,
    pub len: u64,
}

/// Merkle root over `leaves`, oldest first. An odd trailing node is paired
/// with itself; zero leaves hash the empty string.
pub fn merkle_root(leaves: &[Hash256]) -> Hash256 {
    if leaves.is_empty() {
        return sha256(b"");
    }
    let mut level = leaves.to_vec();
    loop {
        // A single leaf still goes through one combining pass, pairing with itself.
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        for pair in level.chunks(2) {
            let left = &pair[0];
            let right = pair.get(1).unwrap_or(left);
            next.push(sha256_pair(left, right));
        }
        level = next;
        if level.len() == 1 {
            return level[0];
        }
    }
}

/// Root over the hashes of the blocks at heights `max(0, height-6) .. height-1`,
/// the integrity commitment stored in the block mined at `height`.
pub fn ancestor_merkle_root(chain: &Chain, height: u64) -> Result<Hash256, HeightOutOfRange> {
    if height > chain.len() {
        return Err(HeightOutOfRange { height, len: chain.len() });
    }
    let start = height.saturating_sub(ANCESTOR_WINDOW);
    let leaves: Vec<Hash256> = (start..height)
        .map(|h| chain.hash_at(h).expect("height bounds checked above"))
        .collect();
    Ok(merkle_root(&leaves))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHA256_EMPTY: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";
    // Frozen with an independent Merkle script over leaves sha256([1])..sha256([6]).
    const MERKLE_SIX_SYNTHETIC: &str =
        "78cd186bafa798b0b7bf89063f142703bf43438dc60eafef6db55f214200557b";
    const MERKLE_ONE_SYNTHETIC: &str =
        "e28c8b26b936e24632469d468079a29f00a3325a104a013a21dc744d2ec35129";

    fn synthetic_leaves(n: u8) -> Vec<Hash256> {
        (1..=n).map(|i| sha256(&[i])).collect()
    }

    #[test]
    fn zero_leaves_is_empty_string_digest() {
        assert_eq!(merkle_root(&[]).to_hex(), SHA256_EMPTY);
    }

    #[test]
    fn single_leaf_pairs_with_itself() {
        let leaves = synthetic_leaves(1);
        assert_eq!(merkle_root(&leaves), sha256_pair(&leaves[0], &leaves[0]));
        assert_eq!(merkle_root(&leaves).to_hex(), MERKLE_ONE_SYNTHETIC);
    }

    #[test]
    fn six_leaves_match_reference_script() {
        assert_eq!(merkle_root(&synthetic_leaves(6)).to_hex(), MERKLE_SIX_SYNTHETIC);
    }

    #[test]
    fn every_leaf_position_flips_the_root() {
        for n in 1..=6u8 {
            let leaves = synthetic_leaves(n);
            let root = merkle_root(&leaves);
            for pos in 0..leaves.len() {
                let mut mutated = leaves.clone();
                let mut bytes = *mutated[pos].as_bytes();
                bytes[0] ^= 0xff;
                mutated[pos] = Hash256::from_bytes(bytes);
                assert_ne!(
                    merkle_root(&mutated),
                    root,
                    "leaf {pos} of {n} must flip the root"
                );
            }
        }
    }
}
