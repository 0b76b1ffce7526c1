//! Additive one-time masks over `Z/2³²` drawn from a keyed ChaCha20 stream.
//!
//! The stream key is `SHA-256(tag ‖ k_Mask ‖ session_id)`. Each message
//! selects ChaCha stream `2·counter + direction`, and word `i` of the mask is
//! word `i` of that stream, so every `(counter, direction, block)` triple
//! maps to a distinct keystream block.

use super::codec::IntBlob;
use super::{sha256, CryptoError};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use zeroize::{Zeroize, ZeroizeOnDrop};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    ClientToServer = 0,
    ServerToClient = 1,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedBlob {
    pub shape: Vec<usize>,
    pub frac_bits: u8,
    pub words: Vec<u32>,
}

#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct MaskStream {
    key: [u8; 32],
    zero: bool,
}

impl std::fmt::Debug for MaskStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MaskStream").field("zero", &self.zero).finish_non_exhaustive()
    }
}

impl MaskStream {
    pub fn new(k_mask: &[u8; 32], session_id: &[u8; 16]) -> Self {
        MaskStream {
            key: sha256(&[b"gridsplit mask stream", k_mask, session_id]),
            zero: false,
        }
    }

    /// All-zero stream: masking becomes the identity. Used by the plain codec
    /// mode and tests.
    pub fn zero() -> Self {
        MaskStream { key: [0; 32], zero: true }
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    fn rng(&self, counter: u64, dir: Direction) -> Result<ChaCha20Rng, CryptoError> {
        if counter >= 1 << 63 {
            return Err(CryptoError::CounterRange(counter));
        }
        let mut rng = ChaCha20Rng::from_seed(self.key);
        rng.set_stream(counter << 1 | dir as u64);
        Ok(rng)
    }

    /// The first `n` mask words for one message.
    pub fn words(&self, counter: u64, dir: Direction, n: usize) -> Result<Vec<u32>, CryptoError> {
        let mut out = vec![0u32; n];
        self.apply(counter, dir, &mut out, false)?;
        Ok(out)
    }

    fn apply(&self, counter: u64, dir: Direction, words: &mut [u32], subtract: bool) -> Result<(), CryptoError> {
        let mut rng = self.rng(counter, dir)?;
        if self.zero {
            return Ok(());
        }
        let mut buf = [0u8; 4096];
        for chunk in words.chunks_mut(buf.len() / 4) {
            let bytes = &mut buf[..chunk.len() * 4];
            rng.fill_bytes(bytes);
            for (w, m) in chunk.iter_mut().zip(bytes.chunks_exact(4)) {
                let m = u32::from_le_bytes(m.try_into().expect("4 bytes"));
                *w = if subtract { w.wrapping_sub(m) } else { w.wrapping_add(m) };
            }
        }
        buf.zeroize();
        Ok(())
    }

    pub fn mask_words(&self, words: &mut [u32], counter: u64, dir: Direction) -> Result<(), CryptoError> {
        self.apply(counter, dir, words, false)
    }

    pub fn demask_words(&self, words: &mut [u32], counter: u64, dir: Direction) -> Result<(), CryptoError> {
        self.apply(counter, dir, words, true)
    }

    pub fn mask(&self, blob: &IntBlob, counter: u64, dir: Direction) -> Result<MaskedBlob, CryptoError> {
        let mut words = blob.words.clone();
        self.mask_words(&mut words, counter, dir)?;
        Ok(MaskedBlob {
            shape: blob.shape.clone(),
            frac_bits: blob.frac_bits,
            words,
        })
    }

    pub fn demask(&self, m: &MaskedBlob, counter: u64, dir: Direction) -> Result<IntBlob, CryptoError> {
        let mut words = m.words.clone();
        self.demask_words(&mut words, counter, dir)?;
        Ok(IntBlob {
            shape: m.shape.clone(),
            frac_bits: m.frac_bits,
            words,
            saturated: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(words: Vec<u32>) -> IntBlob {
        IntBlob {
            shape: vec![words.len()],
            frac_bits: 16,
            words,
            saturated: 0,
        }
    }

    #[test]
    fn round_trip_and_zero_stream() {
        let s = MaskStream::new(&[3; 32], &[4; 16]);
        let b = blob((0..1000).map(|i| i * 7919).collect());
        let m = s.mask(&b, 5, Direction::ClientToServer).unwrap();
        assert_ne!(m.words, b.words);
        assert_eq!(s.demask(&m, 5, Direction::ClientToServer).unwrap(), b);
        assert_ne!(s.demask(&m, 5, Direction::ServerToClient).unwrap(), b);
        let z = MaskStream::zero().mask(&b, 5, Direction::ClientToServer).unwrap();
        assert_eq!(z.words, b.words);
    }

    #[test]
    fn stream_depends_on_every_input() {
        let base = MaskStream::new(&[1; 32], &[2; 16]).words(7, Direction::ClientToServer, 8).unwrap();
        assert_ne!(base, MaskStream::new(&[9; 32], &[2; 16]).words(7, Direction::ClientToServer, 8).unwrap());
        assert_ne!(base, MaskStream::new(&[1; 32], &[9; 16]).words(7, Direction::ClientToServer, 8).unwrap());
        assert_ne!(base, MaskStream::new(&[1; 32], &[2; 16]).words(8, Direction::ClientToServer, 8).unwrap());
        assert_ne!(base, MaskStream::new(&[1; 32], &[2; 16]).words(7, Direction::ServerToClient, 8).unwrap());
        // positional: a longer request extends a shorter one
        let long = MaskStream::new(&[1; 32], &[2; 16]).words(7, Direction::ClientToServer, 5000).unwrap();
        assert_eq!(&long[..8], &base[..]);
    }

    #[test]
    fn counter_range_checked() {
        let s = MaskStream::new(&[1; 32], &[2; 16]);
        assert_eq!(s.words(1 << 63, Direction::ClientToServer, 1), Err(CryptoError::CounterRange(1 << 63)));
        assert!(s.words((1 << 63) - 1, Direction::ServerToClient, 1).is_ok());
    }
}
