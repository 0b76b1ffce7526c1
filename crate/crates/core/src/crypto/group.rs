//! P-256 keys and ECDH on top of the `p256` crate.

use super::CryptoError;
use p256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use p256::elliptic_curve::PrimeField;
use p256::{AffinePoint, EncodedPoint, FieldBytes, NonZeroScalar, ProjectivePoint, Scalar};
use rand::{CryptoRng, RngCore};
use zeroize::{Zeroize, ZeroizeOnDrop};

/// Secret scalar in `[1, n−1]`.
#[derive(Clone)]
pub struct SecretKey(NonZeroScalar);

impl SecretKey {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        SecretKey(NonZeroScalar::random(rng))
    }

    pub fn from_bytes(bytes: &[u8; 32]) -> Result<Self, CryptoError> {
        let s = Option::<Scalar>::from(Scalar::from_repr(FieldBytes::from(*bytes)))
            .ok_or(CryptoError::InvalidScalar)?;
        Option::<NonZeroScalar>::from(NonZeroScalar::new(s))
            .map(SecretKey)
            .ok_or(CryptoError::InvalidScalar)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_repr().into()
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey((ProjectivePoint::GENERATOR * *self.0).to_affine())
    }

    pub(crate) fn scalar(&self) -> Scalar {
        *self.0
    }
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

impl Drop for SecretKey {
    fn drop(&mut self) {
        self.0.zeroize();
    }
}

/// Non-identity point on P-256.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PublicKey(AffinePoint);

pub const COMPRESSED_LEN: usize = 33;

impl PublicKey {
    pub fn to_compressed(&self) -> [u8; COMPRESSED_LEN] {
        let enc = self.0.to_encoded_point(true);
        enc.as_bytes().try_into().expect("compressed point is 33 bytes")
    }

    /// Parses a SEC1 point, rejecting identity, off-curve and malformed input.
    pub fn from_sec1(bytes: &[u8]) -> Result<Self, CryptoError> {
        let enc = EncodedPoint::from_bytes(bytes).map_err(|_| CryptoError::InvalidPoint)?;
        let pt = Option::<AffinePoint>::from(AffinePoint::from_encoded_point(&enc)).ok_or(CryptoError::InvalidPoint)?;
        if pt == AffinePoint::IDENTITY {
            return Err(CryptoError::InvalidPoint);
        }
        Ok(PublicKey(pt))
    }

    /// Uncompressed affine coordinates, big-endian.
    pub fn coordinates(&self) -> ([u8; 32], [u8; 32]) {
        let enc = self.0.to_encoded_point(false);
        let mut x = [0u8; 32];
        let mut y = [0u8; 32];
        x.copy_from_slice(enc.x().expect("non-identity"));
        y.copy_from_slice(enc.y().expect("uncompressed"));
        (x, y)
    }

    pub(crate) fn point(&self) -> ProjectivePoint {
        self.0.into()
    }

    pub(crate) fn from_projective(p: ProjectivePoint) -> Option<Self> {
        let a = p.to_affine();
        (a != AffinePoint::IDENTITY).then_some(PublicKey(a))
    }
}

#[derive(Debug)]
pub struct KeyPair {
    pub sk: SecretKey,
    pub pk: PublicKey,
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self::from_secret(SecretKey::random(rng))
    }

    pub fn from_secret(sk: SecretKey) -> Self {
        let pk = sk.public_key();
        KeyPair { sk, pk }
    }
}

/// Shared ECDH point, kept as its compressed encoding.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SharedPoint([u8; COMPRESSED_LEN]);

impl SharedPoint {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn public(&self) -> PublicKey {
        PublicKey::from_sec1(&self.0).expect("shared point is valid")
    }
}

impl std::fmt::Debug for SharedPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SharedPoint(..)")
    }
}

/// `sk_self · pk_peer`. Peer points are validated when parsed, so the
/// result is never the identity (prime-order group, nonzero scalar).
pub fn ecdh_shared(sk_self: &SecretKey, pk_peer: &PublicKey) -> SharedPoint {
    let p = PublicKey::from_projective(pk_peer.point() * sk_self.scalar()).expect("prime-order group");
    SharedPoint(p.to_compressed())
}
