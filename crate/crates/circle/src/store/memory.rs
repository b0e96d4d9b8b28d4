//! Volatile block store backed by a plain vector.

use crate::ledger::Block;

use super::{check_append, check_truncate, BlockStore, StoreError};

#[derive(Debug, Default, Clone)]
pub struct InMemoryStore {
    blocks: Vec<Block>,
}

impl InMemoryStore {
    pub fn new() -> Self {
        InMemoryStore::default()
    }
}

impl BlockStore for InMemoryStore {
    fn put_block(&mut self, block: &Block) -> Result<(), StoreError> {
        check_append(self.tip_height(), block.header.height)?;
        self.blocks.push(block.clone());
        Ok(())
    }

    fn get_block(&self, height: u64) -> Result<Option<Block>, StoreError> {
        Ok(self.blocks.get(height as usize).cloned())
    }

    fn tip_height(&self) -> Option<u64> {
        self.blocks.len().checked_sub(1).map(|h| h as u64)
    }

    fn truncate_to(&mut self, height: u64) -> Result<(), StoreError> {
        check_truncate(self.tip_height(), height)?;
        self.blocks.truncate(height as usize + 1);
        Ok(())
    }

    fn clear(&mut self) -> Result<(), StoreError> {
        self.blocks.clear();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_contract() {
        let mut store = InMemoryStore::new();
        crate::store::tests::exercise_basic_contract(&mut store);
    }
}
