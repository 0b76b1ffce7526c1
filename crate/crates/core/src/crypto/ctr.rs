//! Counter mode over any [`BlockCipher`]. The counter block starts at `iv`
//! and is incremented as a big-endian integer modulo `2^(8·BLOCK)`.

use super::BlockCipher;

pub fn apply<C: BlockCipher>(cipher: &C, iv: &[u8], data: &mut [u8]) {
    assert_eq!(iv.len(), C::BLOCK, "iv must be one block");
    let mut counter = iv.to_vec();
    let mut ks = vec![0u8; C::BLOCK];
    for chunk in data.chunks_mut(C::BLOCK) {
        ks.copy_from_slice(&counter);
        cipher.encrypt_block(&mut ks);
        for (d, k) in chunk.iter_mut().zip(&ks) {
            *d ^= k;
        }
        for b in counter.iter_mut().rev() {
            *b = b.wrapping_add(1);
            if *b != 0 {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::aes::Aes128;

    #[test]
    fn sp800_38a_f5_1() {
        let key: [u8; 16] = hex::decode("2b7e151628aed2a6abf7158809cf4f3c").unwrap().try_into().unwrap();
        let iv = hex::decode("f0f1f2f3f4f5f6f7f8f9fafbfcfdfeff").unwrap();
        let mut data = hex::decode("6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e51").unwrap();
        apply(&Aes128::new(&key), &iv, &mut data);
        assert_eq!(
            hex::encode(&data),
            "874d6191b620e3261bef6864990db6ce9806f66b7970fdff8617187bb9fffdff"
        );
    }

    #[test]
    fn counter_wraps() {
        let aes = Aes128::new(&[0; 16]);
        let mut a = vec![0u8; 48];
        apply(&aes, &[0xff; 16], &mut a);
        let mut b = vec![0u8; 16];
        apply(&aes, &[0; 16], &mut b);
        assert_eq!(&a[16..32], &b[..]);
    }
}
