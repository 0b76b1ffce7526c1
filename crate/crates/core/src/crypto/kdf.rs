//! HKDF-SHA256 and the per-session key split.

use super::group::SharedPoint;
use super::CryptoError;
use hkdf::Hkdf;
use sha2::Sha256;
use zeroize::{Zeroize, ZeroizeOnDrop};

pub const MAX_OUTPUT: usize = 255 * 32;

/// Extract-then-expand with `salt`, using `context` as the info string.
pub fn kdf(secret: &[u8], salt: &[u8], context: &[u8], len: usize) -> Result<Vec<u8>, CryptoError> {
    if len > MAX_OUTPUT {
        return Err(CryptoError::KdfLength {
            requested: len,
            max: MAX_OUTPUT,
        });
    }
    let hk = Hkdf::<Sha256>::new(Some(salt), secret);
    let mut out = vec![0u8; len];
    hk.expand(context, &mut out).expect("length checked");
    Ok(out)
}

#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SessionKeys {
    pub k_enc: [u8; 32],
    pub k_mask: [u8; 32],
}

impl std::fmt::Debug for SessionKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SessionKeys(..)")
    }
}

pub fn derive_session_keys(shared: &SharedPoint, salt: &[u8]) -> SessionKeys {
    let take = |ctx: &[u8]| -> [u8; 32] {
        let mut v = kdf(shared.as_bytes(), salt, ctx, 32).expect("32 ≤ max");
        let out = v.as_slice().try_into().expect("32 bytes");
        v.zeroize();
        out
    };
    SessionKeys {
        k_enc: take(b"enc"),
        k_mask: take(b"mask"),
    }
}
