//! Payload sealing with a key bound to a physical file.
//!
//! The symmetric key is a deterministic function of the key-source file bytes:
//! `key = SHA-256(source ‖ salt ‖ MD5(source))` with a fixed 32-byte salt.
//! Editing a single byte of the source file changes the key, so previously
//! sealed payloads become unrecoverable. Sealed blobs are AES-256-GCM:
//! `ciphertext ‖ 16-byte tag ‖ 12-byte nonce`.

use aes_gcm::aead::Aead;
use aes_gcm::{Aes256Gcm, Key, KeyInit, Nonce};
use md5::Md5;
use sha2::Digest;
use thiserror::Error;

use super::hash::{sha256, Hash256};

/// Required salt length in bytes.
pub const SALT_LEN: usize = 32;

/// AES-GCM authentication tag length.
pub const TAG_LEN: usize = 16;

/// AES-GCM nonce length.
pub const NONCE_LEN: usize = 12;

/// Minimum length of a well-formed sealed blob (empty plaintext + tag + nonce).
pub const MIN_SEALED_LEN: usize = TAG_LEN + NONCE_LEN;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SealError {
    #[error("salt must be exactly {SALT_LEN} bytes, got {0}")]
    SaltLength(usize),
    #[error("sealed blob too short: {0} bytes, need at least {MIN_SEALED_LEN}")]
    Malformed(usize),
    #[error("authentication failure: wrong key or tampered data")]
    AuthFailure,
}

/// Symmetric key derived from a key-source file, plus the fingerprint of that file.
#[derive(Clone)]
pub struct DerivedKey {
    key: [u8; 32],
    pub source_fingerprint: Hash256,
}

impl std::fmt::Debug for DerivedKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // key bytes intentionally not printed
        write!(f, "DerivedKey(source={})", self.source_fingerprint)
    }
}

/// Derive the circle payload key from the key-source bytes and a 32-byte salt.
///
/// `key = SHA-256(source_bytes ‖ salt ‖ MD5(source_bytes))`, with the MD5
/// output as raw 16 bytes. Deterministic in both inputs.
pub fn derive_key(source_bytes: &[u8], salt: &[u8]) -> Result<DerivedKey, SealError> {
    if salt.len() != SALT_LEN {
        return Err(SealError::SaltLength(salt.len()));
    }
    let md5_digest = Md5::digest(source_bytes);
    let mut hasher = sha2::Sha256::new();
    hasher.update(source_bytes);
    hasher.update(salt);
    hasher.update(md5_digest);
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    Ok(DerivedKey {
        key,
        source_fingerprint: sha256(source_bytes),
    })
}

/// Seal `plaintext` under `key`. The nonce must be unique per (key, block).
///
/// Output layout: `ciphertext ‖ tag(16) ‖ nonce(12)`.
pub fn seal_payload(key: &DerivedKey, plaintext: &[u8], block_nonce: &[u8; NONCE_LEN]) -> Vec<u8> {
    let cipher = Aes256Gcm::new(&Key::<Aes256Gcm>::from(key.key));
    let nonce = Nonce::from(*block_nonce);
    // Aead::encrypt appends the tag to the ciphertext; infallible for in-memory buffers.
    let mut sealed = cipher
        .encrypt(&nonce, plaintext)
        .expect("AES-GCM encryption of an in-memory buffer cannot fail");
    sealed.extend_from_slice(block_nonce);
    sealed
}

/// Open a sealed blob. Fails if the blob is too short or the tag does not verify.
pub fn open_payload(key: &DerivedKey, sealed: &[u8]) -> Result<Vec<u8>, SealError> {
    if sealed.len() < MIN_SEALED_LEN {
        return Err(SealError::Malformed(sealed.len()));
    }
    let (ciphertext, nonce_bytes) = sealed.split_at(sealed.len() - NONCE_LEN);
    let nonce_arr: [u8; NONCE_LEN] = nonce_bytes.try_into().expect("split length is NONCE_LEN");
    let cipher = Aes256Gcm::new(&Key::<Aes256Gcm>::from(key.key));
    cipher
        .decrypt(&Nonce::from(nonce_arr), ciphertext)
        .map_err(|_| SealError::AuthFailure)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen with a reference digest tool: sha256(b"" + 32*0x00 + md5(b"")).
    const KEY_EMPTY_ZERO_SALT: &str =
        "856c2d7d991b024ef0a64f26c447fb0fca7a57d77cd0c1c6a4148e09fd2f1531";
    const KEY_A_ZERO_SALT: &str =
        "f1517d9a93f3a6b70a56052bb3a73f03ef2864247de936e259b3fced40892bd2";
    const KEY_B_ZERO_SALT: &str =
        "2a5969f5c583cc124f30c630f483d522093309968de5e39820b9cd70e3877b14";

    fn key_hex(key: &DerivedKey) -> String {
        hex::encode(key.key)
    }

    #[test]
    fn derive_key_matches_reference_digest() {
        let key = derive_key(b"", &[0u8; 32]).unwrap();
        assert_eq!(key_hex(&key), KEY_EMPTY_ZERO_SALT);
    }

    #[test]
    fn derive_key_is_deterministic() {
        let a = derive_key(b"source", &[7u8; 32]).unwrap();
        let b = derive_key(b"source", &[7u8; 32]).unwrap();
        assert_eq!(a.key, b.key);
        assert_eq!(a.source_fingerprint, b.source_fingerprint);
    }

    #[test]
    fn derive_key_separates_sources() {
        let a = derive_key(b"a", &[0u8; 32]).unwrap();
        let b = derive_key(b"b", &[0u8; 32]).unwrap();
        assert_eq!(key_hex(&a), KEY_A_ZERO_SALT);
        assert_eq!(key_hex(&b), KEY_B_ZERO_SALT);
        assert_ne!(a.key, b.key);
    }

    #[test]
    fn derive_key_rejects_bad_salt() {
        assert_eq!(derive_key(b"x", &[0u8; 31]).unwrap_err(), SealError::SaltLength(31));
        assert_eq!(derive_key(b"x", &[0u8; 33]).unwrap_err(), SealError::SaltLength(33));
    }

    #[test]
    fn seal_open_round_trip() {
        let key = derive_key(b"key source", &[1u8; 32]).unwrap();
        let sealed = seal_payload(&key, b"telemetry", &[9u8; 12]);
        assert_eq!(sealed.len(), 9 + TAG_LEN + NONCE_LEN);
        assert_eq!(open_payload(&key, &sealed).unwrap(), b"telemetry");
    }

    #[test]
    fn tampered_ciphertext_fails_authentication() {
        let key = derive_key(b"key source", &[1u8; 32]).unwrap();
        let mut sealed = seal_payload(&key, b"telemetry", &[9u8; 12]);
        sealed[0] ^= 0x01;
        assert_eq!(open_payload(&key, &sealed).unwrap_err(), SealError::AuthFailure);
    }

    #[test]
    fn truncated_blob_is_malformed() {
        let key = derive_key(b"key source", &[1u8; 32]).unwrap();
        assert_eq!(open_payload(&key, &[0u8; 27]).unwrap_err(), SealError::Malformed(27));
        assert_eq!(open_payload(&key, b"").unwrap_err(), SealError::Malformed(0));
    }

    #[test]
    fn stale_key_after_source_change_fails() {
        let key = derive_key(b"original file", &[2u8; 32]).unwrap();
        let sealed = seal_payload(&key, b"data", &[3u8; 12]);
        let stale = derive_key(b"original filE", &[2u8; 32]).unwrap();
        assert_eq!(open_payload(&stale, &sealed).unwrap_err(), SealError::AuthFailure);
    }

    #[test]
    fn any_source_byte_mutation_invalidates_old_seals() {
        let source = b"the quick brown fox".to_vec();
        let key = derive_key(&source, &[5u8; 32]).unwrap();
        let sealed = seal_payload(&key, b"payload", &[4u8; 12]);
        for offset in 0..source.len() {
            let mut mutated = source.clone();
            mutated[offset] ^= 0x80;
            let new_key = derive_key(&mutated, &[5u8; 32]).unwrap();
            assert_eq!(
                open_payload(&new_key, &sealed).unwrap_err(),
                SealError::AuthFailure,
                "mutation at offset {offset} must invalidate the key"
            );
        }
    }
}
