//! Block structure, proof-of-work mining and verification, the six-ancestor
//! Merkle root, and payload sealing with a file-bound derived key.

mod block;
mod hash;
mod merkle;
mod pow;
mod seal;

pub use block::{compute_block_hash, hex_bytes, Block, BlockHeader, Chain, ChainError, HEADER_WIRE_LEN};
pub use hash::{sha256, sha256_pair, Hash256, HashParseError};
pub use merkle::{ancestor_merkle_root, merkle_root, HeightOutOfRange, ANCESTOR_WINDOW};
pub use pow::{mine_block, verify_block, InvalidReason, MineError, VerificationOutcome, MAX_DIFFICULTY};
pub use seal::{derive_key, open_payload, seal_payload, DerivedKey, SealError, NONCE_LEN, SALT_LEN, TAG_LEN};

/// Fixed salt mixed into the payload key derivation for every circle.
pub const CIRCLE_KEY_SALT: [u8; SALT_LEN] = [
    0x5a, 0x1e, 0x8f, 0x03, 0x9c, 0x47, 0xb2, 0x6d, 0xe1, 0x70, 0x2b, 0xc8, 0x94, 0x55, 0x0f, 0xa6,
    0x3d, 0xd9, 0x12, 0x68, 0x7e, 0xc4, 0x21, 0xbb, 0x06, 0x8a, 0xf5, 0x30, 0x49, 0xe7, 0x9b, 0x5c,
];
