//! Elliptic-curve key agreement, signatures, key derivation, the additive
//! mask stream with its fixed-point codec, target encryption, and the block
//! ciphers used as benchmark baselines.

pub mod aes;
pub mod bench;
pub mod codec;
pub mod ctr;
pub mod curve;
pub mod group;
pub mod kdf;
pub mod keys;
pub mod mask;
pub mod schnorr;
pub mod simon;
pub mod speck;

pub use codec::{dequantize, quantize, IntBlob, DEFAULT_FRAC_BITS};
pub use curve::{CurveParams, Point};
pub use group::{ecdh_shared, KeyPair, PublicKey, SecretKey, SharedPoint};
pub use kdf::{derive_session_keys, kdf, SessionKeys};
pub use mask::{Direction, MaskStream, MaskedBlob};
pub use schnorr::{sign, verify, Signature, SIGNATURE_LEN};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("point is not a valid non-identity curve point")]
    InvalidPoint,
    #[error("secret scalar out of range")]
    InvalidScalar,
    #[error("kdf output length {requested} exceeds {max}")]
    KdfLength { requested: usize, max: usize },
    #[error("frac_bits {0} outside 0..=30")]
    FracBits(u8),
    #[error("message counter {0} exceeds the mask stream range")]
    CounterRange(u64),
    #[error("blob length mismatch: {0}")]
    BlobShape(String),
    #[error("key file: {0}")]
    KeyFile(String),
}

/// SHA-256 of the concatenation of `parts`.
pub fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Type-erased block cipher used by [`ctr`] and the benchmark.
pub trait BlockCipher {
    const BLOCK: usize;
    fn encrypt_block(&self, block: &mut [u8]);
    fn decrypt_block(&self, block: &mut [u8]);
}

/// `m₂ = Enc(k_Enc, target)`: AES-128-CTR keyed by the first half of
/// `k_enc`, with the IV bound to `(session_id, counter)`.
pub fn encrypt_target(k_enc: &[u8; 32], session_id: &[u8; 16], counter: u64, data: &[u8]) -> Vec<u8> {
    let cipher = aes::Aes128::new(k_enc[..16].try_into().expect("16 bytes"));
    let digest = sha256(&[b"gridsplit target iv", session_id, &counter.to_le_bytes()]);
    let mut iv = [0u8; 16];
    iv.copy_from_slice(&digest[..16]);
    let mut out = data.to_vec();
    ctr::apply(&cipher, &iv, &mut out);
    out
}

pub fn decrypt_target(k_enc: &[u8; 32], session_id: &[u8; 16], counter: u64, data: &[u8]) -> Vec<u8> {
    encrypt_target(k_enc, session_id, counter, data)
}
