//! Deterministic Schnorr signatures over P-256.
//!
//! Signature encoding is `e ‖ s` (32 bytes each, big-endian) where
//! `k = H(nonce-tag ‖ sk ‖ digest)`, `R = k·G`, `e = H(R ‖ pk ‖ digest)` and
//! `s = k + e·sk`. Verification recomputes `R' = s·G − e·pk`.

use super::group::{PublicKey, SecretKey};
use super::sha256;
use p256::elliptic_curve::ops::Reduce;
use p256::elliptic_curve::{Field, PrimeField};
use p256::{FieldBytes, ProjectivePoint, Scalar, U256};

pub const SIGNATURE_LEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

fn hash_to_scalar(parts: &[&[u8]]) -> Scalar {
    let h = sha256(parts);
    <Scalar as Reduce<U256>>::reduce_bytes(&FieldBytes::from(h))
}

fn challenge(r: &ProjectivePoint, pk: &PublicKey, digest: &[u8; 32]) -> Option<Scalar> {
    let r = PublicKey::from_projective(*r)?;
    Some(hash_to_scalar(&[b"gridsplit schnorr challenge", &r.to_compressed(), &pk.to_compressed(), digest]))
}

pub fn sign(sk: &SecretKey, digest: &[u8; 32]) -> Signature {
    let pk = sk.public_key();
    let mut ctr = 0u32;
    loop {
        let k = hash_to_scalar(&[b"gridsplit schnorr nonce", &sk.to_bytes(), digest, &ctr.to_le_bytes()]);
        ctr += 1;
        if bool::from(k.is_zero()) {
            continue;
        }
        let r = ProjectivePoint::GENERATOR * k;
        let Some(e) = challenge(&r, &pk, digest) else { continue };
        let s = k + e * sk.scalar();
        let mut out = [0u8; SIGNATURE_LEN];
        out[..32].copy_from_slice(&e.to_repr());
        out[32..].copy_from_slice(&s.to_repr());
        return Signature(out);
    }
}

/// Never panics; any malformed encoding verifies as false.
pub fn verify(pk: &PublicKey, digest: &[u8; 32], sig: &[u8]) -> bool {
    if sig.len() != SIGNATURE_LEN {
        return false;
    }
    let parse = |b: &[u8]| {
        let arr: [u8; 32] = b.try_into().expect("32-byte half");
        Option::<Scalar>::from(Scalar::from_repr(FieldBytes::from(arr)))
    };
    let (Some(e), Some(s)) = (parse(&sig[..32]), parse(&sig[32..])) else {
        return false;
    };
    let r = ProjectivePoint::GENERATOR * s - pk.point() * e;
    challenge(&r, pk, digest) == Some(e)
}
