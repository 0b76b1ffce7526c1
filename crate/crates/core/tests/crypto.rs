mod common;

use common::stats::{passes_uniformity, pearson};
use gridsplit::crypto::curve::{CurveParams, Point};
use gridsplit::crypto::{
    dequantize, derive_session_keys, ecdh_shared, encrypt_target, kdf, quantize, Direction, IntBlob, KeyPair,
    MaskStream,
};
use gridsplit::tensor::Tensor;
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use std::collections::HashSet;

#[test]
fn toy_curve_doubling_matches_hand_computation() {
    let c = CurveParams::toy();
    // λ = (3·5² + 2)·(2·1)⁻¹ = 77·9 ≡ 13 (mod 17)
    let lambda = 13u64;
    let x3 = (lambda * lambda + 2 * 17 - 2 * 5) % 17;
    let y3 = (lambda * (5 + 17 - x3) + 17 - 1) % 17;
    assert_eq!((x3, y3), (6, 3));
    assert_eq!(c.double(&c.g), Point::affine(x3, y3));
}

#[test]
fn ecdh_agrees_and_matches_bigint_curve() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let curve = CurveParams::p256();
    let a = KeyPair::generate(&mut rng);
    let b = KeyPair::generate(&mut rng);
    let s = ecdh_shared(&a.sk, &b.pk);
    assert_eq!(s, ecdh_shared(&b.sk, &a.pk));
    let (bx, by) = b.pk.coordinates();
    let bp = Point::Affine {
        x: BigUint::from_bytes_be(&bx),
        y: BigUint::from_bytes_be(&by),
    };
    let (sx, sy) = s.public().coordinates();
    let expect = Point::Affine {
        x: BigUint::from_bytes_be(&sx),
        y: BigUint::from_bytes_be(&sy),
    };
    assert_eq!(curve.mul(&BigUint::from_bytes_be(&a.sk.to_bytes()), &bp), expect);
}

#[test]
fn kdf_contexts_are_far_apart() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let mut min = 256;
    for _ in 0..1000 {
        let mut secret = [0u8; 33];
        rng.fill_bytes(&mut secret);
        let salt: [u8; 16] = rng.gen();
        let e = kdf(&secret, &salt, b"enc", 32).unwrap();
        let m = kdf(&secret, &salt, b"mask", 32).unwrap();
        let d: u32 = e.iter().zip(&m).map(|(a, b)| (a ^ b).count_ones()).sum();
        min = min.min(d);
    }
    assert!(min >= 100, "closest pair differs in only {min} bits");
}

#[test]
fn session_keys_are_distinct() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let a = KeyPair::generate(&mut rng);
    let b = KeyPair::generate(&mut rng);
    let k = derive_session_keys(&ecdh_shared(&a.sk, &b.pk), &[1; 16]);
    assert_ne!(k.k_enc, k.k_mask);
    assert_eq!(k, derive_session_keys(&ecdh_shared(&b.sk, &a.pk), &[1; 16]));
    assert_ne!(k, derive_session_keys(&ecdh_shared(&b.sk, &a.pk), &[2; 16]));
}

#[test]
fn quantization_bound_on_many_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let bound = 2f64.powi(-17);
    let vals: Vec<f32> = (0..200_000).map(|_| rng.gen_range(-30000.0f32..30000.0)).collect();
    let t = Tensor::new(&[vals.len()], vals).unwrap();
    let back: Tensor<f32> = dequantize(&quantize(&t, 16).unwrap()).unwrap();
    for (a, b) in t.data().iter().zip(back.data()) {
        assert!((*a as f64 - *b as f64).abs() <= bound);
    }
    let vals: Vec<f64> = (0..200_000).map(|_| rng.gen_range(-1.0..1.0) * 2f64.powi(rng.gen_range(-20..14))).collect();
    let t = Tensor::new(&[vals.len()], vals).unwrap();
    let back: Tensor<f64> = dequantize(&quantize(&t, 16).unwrap()).unwrap();
    for (a, b) in t.data().iter().zip(back.data()) {
        assert!((a - b).abs() <= bound);
    }
}

fn ramp_blob(n: usize) -> IntBlob {
    let t = Tensor::from_fn(&[n], |i| (i as f64 * 0.001).sin());
    quantize(&t, 16).unwrap()
}

#[test]
fn masked_words_look_uniform_and_uncorrelated() {
    let b = ramp_blob(1 << 18);
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let stream = MaskStream::new(&rng.gen(), &rng.gen());
    let m = stream.mask(&b, 1, Direction::ClientToServer).unwrap();
    assert!(passes_uniformity(m.words.iter().map(|w| (w >> 24) as u8)));
    assert!(passes_uniformity(m.words.iter().map(|w| *w as u8)));
    let plain: Vec<f64> = b.words.iter().map(|&w| w as i32 as f64).collect();
    let masked: Vec<f64> = m.words.iter().map(|&w| w as f64).collect();
    assert!(pearson(&plain, &masked).abs() < 0.05);
}

#[test]
fn mask_blocks_never_repeat_within_a_session() {
    let stream = MaskStream::new(&[5; 32], &[6; 16]);
    let mut seen = HashSet::new();
    for counter in 0..1563u64 {
        for dir in [Direction::ClientToServer, Direction::ServerToClient] {
            let words = stream.words(counter, dir, 32 * 16).unwrap();
            for block in words.chunks(16) {
                assert!(seen.insert(block.to_vec()), "repeat at counter {counter} {dir:?}");
            }
        }
    }
    assert!(seen.len() >= 100_000);
}

#[test]
fn ciphertext_bytes_look_uniform() {
    let pt = vec![0u8; 1 << 18];
    let ct = encrypt_target(&[3; 32], &[4; 16], 1, &pt);
    assert!(passes_uniformity(ct.iter().copied()));
}

proptest! {
    #[test]
    fn demask_inverts_mask(words in prop::collection::vec(any::<u32>(), 0..300), counter in 0u64..1 << 40, key in any::<[u8; 32]>(), s2c in any::<bool>()) {
        let dir = if s2c { Direction::ServerToClient } else { Direction::ClientToServer };
        let b = IntBlob { shape: vec![words.len()], frac_bits: 16, words, saturated: 0 };
        let s = MaskStream::new(&key, &[0; 16]);
        prop_assert_eq!(s.demask(&s.mask(&b, counter, dir).unwrap(), counter, dir).unwrap(), b);
    }

    #[test]
    fn quantize_round_trip_bound(v in -1000.0f64..1000.0, f in 0u8..=20) {
        let t = Tensor::new(&[1], vec![v]).unwrap();
        let back: Tensor<f64> = dequantize(&quantize(&t, f).unwrap()).unwrap();
        prop_assert!((back.data()[0] - v).abs() <= 2f64.powi(-(f as i32) - 1) + 1e-12);
    }
}
