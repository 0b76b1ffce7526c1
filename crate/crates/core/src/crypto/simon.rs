//! Simon64/128: 32-bit words, 44 rounds, round constants from sequence z₃.
//!
//! Same byte convention as [`super::speck`].

use super::speck::{load, store};
use super::BlockCipher;

const ROUNDS: usize = 44;

/// z₃, most significant bit first (bit 61 is z₃[0]).
const Z3: u64 = 0b11011011101011000110010111100000010010001010011100110100001111;

pub struct Simon64_128 {
    rk: [u32; ROUNDS],
}

impl Simon64_128 {
    /// Key words in the designers' written order `(k₃, k₂, k₁, k₀)`.
    pub fn from_words(key: [u32; 4]) -> Self {
        let mut rk = [0u32; ROUNDS];
        rk[..4].copy_from_slice(&[key[3], key[2], key[1], key[0]]);
        for i in 4..ROUNDS {
            let mut t = rk[i - 1].rotate_right(3) ^ rk[i - 3];
            t ^= t.rotate_right(1);
            let z = ((Z3 >> (61 - (i - 4) % 62)) & 1) as u32;
            rk[i] = !rk[i - 4] ^ t ^ z ^ 3;
        }
        Simon64_128 { rk }
    }

    pub fn new(key: &[u8; 16]) -> Self {
        let w = |i: usize| u32::from_le_bytes(key[4 * i..4 * i + 4].try_into().expect("4 bytes"));
        Self::from_words([w(3), w(2), w(1), w(0)])
    }

    fn f(x: u32) -> u32 {
        (x.rotate_left(1) & x.rotate_left(8)) ^ x.rotate_left(2)
    }

    pub fn encrypt_words(&self, mut x: u32, mut y: u32) -> (u32, u32) {
        for &k in &self.rk {
            let t = x;
            x = y ^ Self::f(x) ^ k;
            y = t;
        }
        (x, y)
    }

    pub fn decrypt_words(&self, mut x: u32, mut y: u32) -> (u32, u32) {
        for &k in self.rk.iter().rev() {
            let t = y;
            y = x ^ Self::f(y) ^ k;
            x = t;
        }
        (x, y)
    }
}

impl BlockCipher for Simon64_128 {
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
