//! Append-only JSON-lines block store.
//!
//! One document per line. A block record is
//! `{"h":height,"header":{...},"origin":"...","payload":"<hex>"}` with sorted
//! keys and lowercase hex. Truncation appends a tombstone
//! `{"truncate_to":height}` (`null` for a full clear) so the live file stays
//! append-only; tombstones are compacted away on reload. A file cut mid-record
//! reloads to the last complete record.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ledger::{Block, BlockHeader};
use crate::types::NodeId;

use super::{check_append, check_truncate, BlockStore, StoreError};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockRecord {
    h: u64,
    header: BlockHeader,
    origin: NodeId,
    #[serde(with = "crate::ledger::hex_bytes")]
    payload: Vec<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tombstone {
    truncate_to: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Record {
    Block(BlockRecord),
    Tombstone(Tombstone),
}

impl From<&Block> for BlockRecord {
    fn from(block: &Block) -> Self {
        BlockRecord {
            h: block.header.height,
            header: block.header,
            origin: block.origin_mystic.clone(),
            payload: block.payload_ciphertext.clone(),
        }
    }
}

impl From<BlockRecord> for Block {
    fn from(rec: BlockRecord) -> Self {
        Block {
            header: rec.header,
            payload_ciphertext: rec.payload,
            origin_mystic: rec.origin,
        }
    }
}

/// Canonical JSON-lines encoding of one block record (sorted keys, lowercase
/// hex, no insignificant whitespace). This is the storage wire format and the
/// byte-exact chain serialization used by rollback checks.
pub fn block_record_json(block: &Block) -> String {
    let value = serde_json::to_value(BlockRecord::from(block)).expect("block serializes");
    serde_json::to_string(&value).expect("value serializes")
}

/// Read the blocks of a store file in record order, replaying tombstones but
/// skipping height continuity checks. Verification tooling uses this so a
/// corrupted height is reported by the verifier, not the loader. A torn final
/// line is dropped; corruption anywhere else is an error.
pub fn read_blocks_raw(path: &Path) -> Result<Vec<Block>, StoreError> {
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let total = lines.len();
    let mut blocks: Vec<Block> = Vec::new();
    for (idx, line) in lines.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(_) if idx + 1 == total => break,
            Err(e) => return Err(StoreError::Corrupt { line: idx + 1, detail: e.to_string() }),
        };
        match record {
            Record::Block(rec) => blocks.push(Block::from(rec)),
            Record::Tombstone(t) => match t.truncate_to {
                Some(h) => blocks.truncate(h as usize + 1),
                None => blocks.clear(),
            },
        }
    }
    Ok(blocks)
}

#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    blocks: Vec<Block>,
    file: File,
}

impl FileStore {
    /// Open or create the store at `path`, replaying and compacting records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut blocks: Vec<Block> = Vec::new();
        let mut saw_tombstone = false;
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
            let total = lines.len();
            for (idx, line) in lines.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let record: Record = match serde_json::from_str(&line) {
                    Ok(r) => r,
                    // A torn final line is a crash artifact; anything earlier is corruption.
                    Err(e) if idx + 1 == total => {
                        let _ = e;
                        break;
                    }
                    Err(e) => {
                        return Err(StoreError::Corrupt { line: idx + 1, detail: e.to_string() })
                    }
                };
                match record {
                    Record::Block(rec) => {
                        let block = Block::from(rec);
                        let expected = blocks.len() as u64;
                        if block.header.height != expected {
                            return Err(StoreError::Corrupt {
                                line: idx + 1,
                                detail: format!(
                                    "expected height {expected}, found {}",
                                    block.header.height
                                ),
                            });
                        }
                        blocks.push(block);
                    }
                    Record::Tombstone(t) => {
                        saw_tombstone = true;
                        match t.truncate_to {
                            Some(h) => blocks.truncate(h as usize + 1),
                            None => blocks.clear(),
                        }
                    }
                }
            }
        }
        if saw_tombstone {
            // Compact: rewrite only the live blocks.
            let mut tmp = path.clone();
            tmp.set_extension("compact");
            {
                let mut out = File::create(&tmp)?;
                for block in &blocks {
                    writeln!(out, "{}", block_record_json(block))?;
                }
                out.sync_data()?;
            }
            std::fs::rename(&tmp, &path)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(FileStore { path, blocks, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn append_line(&mut self, line: &str) -> Result<(), StoreError> {
        writeln!(self.file, "{line}")?;
        self.file.sync_data()?;
        Ok(())
    }
}

impl BlockStore for FileStore {
    fn put_block(&mut self, block: &Block) -> Result<(), StoreError> {
        check_append(self.tip_height(), block.header.height)?;
        self.append_line(&block_record_json(block))?;
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
        let tombstone = serde_json::to_string(&Tombstone { truncate_to: Some(height) })
            .expect("tombstone serializes");
        self.append_line(&tombstone)?;
        self.blocks.truncate(height as usize + 1);
        Ok(())
    }

    fn clear(&mut self) -> Result<(), StoreError> {
        let tombstone = serde_json::to_string(&Tombstone { truncate_to: None })
            .expect("tombstone serializes");
        self.append_line(&tombstone)?;
        self.blocks.clear();
        Ok(())
    }
}
