//! Speck64/128: 32-bit words, 27 rounds, rotations α = 8, β = 3.
//!
//! Byte interface follows the designers' little-endian convention: a block
//! is `y ‖ x` and a key is `k₀ ‖ l₀ ‖ l₁ ‖ l₂`, each word little-endian.

use super::BlockCipher;

const ROUNDS: usize = 27;

pub struct Speck64_128 {
    rk: [u32; ROUNDS],
}

impl Speck64_128 {
    /// Key words in the designers' written order `(k₃, k₂, k₁, k₀)`, i.e.
    /// `(l₂, l₁, l₀, k₀)`.
    pub fn from_words(key: [u32; 4]) -> Self {
        let mut k = key[3];
        let mut l = [key[2], key[1], key[0]];
        let mut rk = [0u32; ROUNDS];
        for (i, slot) in rk.iter_mut().enumerate() {
            *slot = k;
            let li = (k.wrapping_add(l[i % 3].rotate_right(8))) ^ i as u32;
            k = k.rotate_left(3) ^ li;
            l[i % 3] = li;
        }
        Speck64_128 { rk }
    }

    pub fn new(key: &[u8; 16]) -> Self {
        let w = |i: usize| u32::from_le_bytes(key[4 * i..4 * i + 4].try_into().expect("4 bytes"));
        Self::from_words([w(3), w(2), w(1), w(0)])
    }

    pub fn encrypt_words(&self, mut x: u32, mut y: u32) -> (u32, u32) {
        for &k in &self.rk {
            x = x.rotate_right(8).wrapping_add(y) ^ k;
            y = y.rotate_left(3) ^ x;
        }
        (x, y)
    }

    pub fn decrypt_words(&self, mut x: u32, mut y: u32) -> (u32, u32) {
        for &k in self.rk.iter().rev() {
            y = (y ^ x).rotate_right(3);
            x = (x ^ k).wrapping_sub(y).rotate_left(8);
        }
        (x, y)
    }
}

pub(crate) fn load(block: &[u8]) -> (u32, u32) {
    let y = u32::from_le_bytes(block[0..4].try_into().expect("4 bytes"));
    let x = u32::from_le_bytes(block[4..8].try_into().expect("4 bytes"));
    (x, y)
}

pub(crate) fn store(block: &mut [u8], x: u32, y: u32) {
    block[0..4].copy_from_slice(&y.to_le_bytes());
    block[4..8].copy_from_slice(&x.to_le_bytes());
}

impl BlockCipher for Speck64_128 {
    const BLOCK: usize = 8;

    fn encrypt_block(&self, block: &mut [u8]) {
        let (x, y) = load(block);
        let (x, y) = self.encrypt_words(x, y);
        store(block, x, y);
    }

    fn decrypt_block(&self, block: &mut [u8]) {
        let (x, y) = load(block);
        let (x, y) = self.decrypt_words(x, y);
        store(block, x, y);
    }
}
