//! Pluggable block store: in-memory and append-only file backends behind one
//! document-oriented interface.

mod file;
mod memory;

use thiserror::Error;

use crate::ledger::{Block, Chain};

pub use file::{block_record_json, read_blocks_raw, FileStore};
pub use memory::InMemoryStore;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("height gap: expected {expected}, got {got}")]
    HeightGap { expected: u64, got: u64 },
    #[error("duplicate height {0}")]
    DuplicateHeight(u64),
    #[error("height {height} out of range, tip is {tip:?}")]
    HeightOutOfRange { height: u64, tip: Option<u64> },
    #[error("store file corrupt at line {line}: {detail}")]
    Corrupt { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Height-addressed block storage. Appends are contiguous; truncation removes
/// everything above a height (the rollback primitive behind revocation).
pub trait BlockStore {
    fn put_block(&mut self, block: &Block) -> Result<(), StoreError>;

    fn get_block(&self, height: u64) -> Result<Option<Block>, StoreError>;

    fn tip_height(&self) -> Option<u64>;

    /// Remove all blocks with height strictly greater than `height`.
    fn truncate_to(&mut self, height: u64) -> Result<(), StoreError>;

    /// Remove every block, including genesis. Rollback of a height-0 insertion.
    fn clear(&mut self) -> Result<(), StoreError>;

    fn tip_block(&self) -> Result<Option<Block>, StoreError> {
        match self.tip_height() {
            Some(h) => self.get_block(h),
            None => Ok(None),
        }
    }

    /// Reconstruct the chain from storage, checking linkage.
    fn load_chain(&self) -> Result<Chain, StoreError> {
        let mut chain = Chain::new();
        let mut height = 0;
        while let Some(block) = self.get_block(height)? {
            chain.push_linked(block).map_err(|e| StoreError::Corrupt {
                line: height as usize + 1,
                detail: e.to_string(),
            })?;
            height += 1;
        }
        Ok(chain)
    }
}

fn check_append(tip: Option<u64>, got: u64) -> Result<(), StoreError> {
    let expected = tip.map(|t| t + 1).unwrap_or(0);
    if got == expected {
        Ok(())
    } else if tip.is_some() && got <= tip.unwrap() {
        Err(StoreError::DuplicateHeight(got))
    } else {
        Err(StoreError::HeightGap { expected, got })
    }
}

fn check_truncate(tip: Option<u64>, height: u64) -> Result<(), StoreError> {
    match tip {
        Some(t) if height <= t => Ok(()),
        _ => Err(StoreError::HeightOutOfRange { height, tip }),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::ledger::{mine_block, Chain};
    use crate::types::NodeId;

    pub(crate) fn sample_blocks(n: u64) -> Vec<Block> {
        let mut chain = Chain::new();
        let mut out = Vec::new();
        for i in 0..n {
            let block = mine_block(
                &chain,
                format!("payload-{i}").into_bytes(),
                0,
                i * 7,
                NodeId::new("m1"),
            )
            .unwrap();
            chain.push_linked(block.clone()).unwrap();
            out.push(block);
        }
        out
    }

    pub(crate) fn exercise_basic_contract(store: &mut dyn BlockStore) {
        let blocks = sample_blocks(3);
        assert_eq!(store.tip_height(), None);
        for b in &blocks {
            store.put_block(b).unwrap();
        }
        assert_eq!(store.tip_height(), Some(2));
        for (i, b) in blocks.iter().enumerate() {
            let got = store.get_block(i as u64).unwrap().unwrap();
            assert_eq!(&got, b);
            assert_eq!(got.hash(), b.hash());
        }
        assert_eq!(store.get_block(3).unwrap(), None);

        // Gap and duplicate appends are rejected.
        let mut gap = blocks[2].clone();
        gap.header.height = 5;
        assert!(matches!(
            store.put_block(&gap).unwrap_err(),
            StoreError::HeightGap { expected: 3, got: 5 }
        ));
        assert!(matches!(
            store.put_block(&blocks[1]).unwrap_err(),
            StoreError::DuplicateHeight(1)
        ));

        // Truncation keeps heights <= target; truncate-to-tip is a no-op.
        store.truncate_to(2).unwrap();
        assert_eq!(store.tip_height(), Some(2));
        store.truncate_to(0).unwrap();
        assert_eq!(store.tip_height(), Some(0));
        assert!(store.get_block(1).unwrap().is_none());
        assert!(matches!(
            store.truncate_to(4).unwrap_err(),
            StoreError::HeightOutOfRange { height: 4, tip: Some(0) }
        ));
        store.clear().unwrap();
        assert_eq!(store.tip_height(), None);
    }
}
