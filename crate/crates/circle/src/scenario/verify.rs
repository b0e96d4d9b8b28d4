//! Replay verification of a stored chain file.

use std::path::Path;

use crate::ledger::{verify_block, Chain, Hash256, InvalidReason, VerificationOutcome};
use crate::store::{read_blocks_raw, StoreError};

/// Result of replaying `verify_block` along a stored chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainVerdict {
    Valid { blocks: u64 },
    Invalid { height: u64, reason: InvalidReason },
}

impl std::fmt::Display for ChainVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChainVerdict::Valid { blocks } => write!(f, "valid ({blocks} blocks)"),
            ChainVerdict::Invalid { height, reason } => {
                write!(f, "invalid at height {height}: {reason}")
            }
        }
    }
}

/// Verify every block of a stored chain in order. An empty store is vacuously
/// valid. With `expect_tip` set, the recomputed tip must match it — this is
/// how a chain is checked against the Watchtower's canonical hash, the only
/// commitment that can attest the final block.
pub fn verify_chain_file(
    path: impl AsRef<Path>,
    expect_tip: Option<Hash256>,
) -> Result<ChainVerdict, StoreError> {
    let blocks = read_blocks_raw(path.as_ref())?;
    let mut chain = Chain::new();
    for block in blocks {
        let position = chain.len();
        match verify_block(&chain, &block) {
            VerificationOutcome::Invalid(reason) => {
                return Ok(ChainVerdict::Invalid { height: position, reason })
            }
            VerificationOutcome::Valid => {
                chain.push_linked(block).expect("verified block links");
            }
        }
    }
    if let Some(expected) = expect_tip {
        if chain.tip_hash() != expected {
            return Ok(ChainVerdict::Invalid {
                height: chain.len().saturating_sub(1),
                reason: InvalidReason::TipMismatch,
            });
        }
    }
    Ok(ChainVerdict::Valid { blocks: chain.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::mine_block;
    use crate::store::{BlockStore, FileStore};
    use crate::types::NodeId;

    fn write_chain(path: &Path, blocks: u64) -> Chain {
        let mut chain = Chain::new();
        let mut store = FileStore::open(path).unwrap();
        for i in 0..blocks {
            let block =
                mine_block(&chain, format!("p{i}").into_bytes(), 4, i * 5, NodeId::new("m1"))
                    .unwrap();
            store.put_block(&block).unwrap();
            chain.push_linked(block).unwrap();
        }
        chain
    }

    #[test]
    fn clean_store_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.jsonl");
        let chain = write_chain(&path, 4);
        assert_eq!(verify_chain_file(&path, None).unwrap(), ChainVerdict::Valid { blocks: 4 });
        assert_eq!(
            verify_chain_file(&path, Some(chain.tip_hash())).unwrap(),
            ChainVerdict::Valid { blocks: 4 }
        );
    }

    #[test]
    fn empty_store_is_vacuously_valid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.jsonl");
        std::fs::write(&path, "").unwrap();
        assert_eq!(verify_chain_file(&path, None).unwrap(), ChainVerdict::Valid { blocks: 0 });
    }

    #[test]
    fn missing_store_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            verify_chain_file(dir.path().join("absent.jsonl"), None),
            Err(StoreError::Io(_))
        ));
    }

    #[test]
    fn flipped_payload_byte_reports_that_height() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.jsonl");
        write_chain(&path, 4);
        // Flip one byte of block 2's payload on disk.
        let mut blocks = read_blocks_raw(&path).unwrap();
        blocks[2].payload_ciphertext[0] ^= 0x40;
        let rewritten: String = blocks
            .iter()
            .map(|b| crate::store::block_record_json(b) + "\n")
            .collect();
        std::fs::write(&path, rewritten).unwrap();
        assert_eq!(
            verify_chain_file(&path, None).unwrap(),
            ChainVerdict::Invalid { height: 2, reason: InvalidReason::PayloadHashMismatch }
        );
    }

    #[test]
    fn wrong_expected_tip_is_reported_at_tip_height() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.jsonl");
        write_chain(&path, 3);
        let verdict = verify_chain_file(&path, Some(Hash256::from_bytes([9u8; 32]))).unwrap();
        assert_eq!(
            verdict,
            ChainVerdict::Invalid { height: 2, reason: InvalidReason::TipMismatch }
        );
    }
}
