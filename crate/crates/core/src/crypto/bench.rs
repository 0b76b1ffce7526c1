//! Wall-clock comparison of masking against the block-cipher baselines.

use super::aes::Aes128;
use super::mask::{Direction, MaskStream};
use super::simon::Simon64_128;
use super::speck::Speck64_128;
use super::{ctr, BlockCipher, CryptoError};
use std::fmt::Write as _;
use std::hint::black_box;
use std::time::{Duration, Instant};

pub const RUNS: usize = 9;
pub const MIN_PAYLOAD: usize = 1024;

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub name: &'static str,
    pub encrypt: Duration,
    pub decrypt: Duration,
}

impl BenchRow {
    pub fn total(&self) -> Duration {
        self.encrypt + self.decrypt
    }
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub payload_bytes: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, name: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("cipher,payload_bytes,encrypt_us,decrypt_us\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.name, self.payload_bytes, r.encrypt.as_micros(), r.decrypt.as_micros());
        }
        s
    }

    pub fn render(&self) -> String {
        let mut s = format!("payload {} bytes, median of {RUNS} runs\n", self.payload_bytes);
        let _ = writeln!(s, "{:<16} {:>14} {:>14}", "cipher", "encrypt (us)", "decrypt (us)");
        for r in &self.rows {
            let _ = writeln!(s, "{:<16} {:>14} {:>14}", r.name, r.encrypt.as_micros(), r.decrypt.as_micros());
        }
        let _ = writeln!(s, "{:<16} {:>14} {:>14}", "fhe", "not measured", "not measured");
        s
    }
}

fn median_of<F: FnMut()>(mut f: F) -> Duration {
    let mut times: Vec<Duration> = (0..RUNS)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .collect();
    times.sort();
    times[RUNS / 2]
}

fn bench_ctr<C: BlockCipher>(name: &'static str, cipher: &C, iv: &[u8], payload: &[u8]) -> BenchRow {
    let mut buf = payload.to_vec();
    let encrypt = median_of(|| {
        buf.copy_from_slice(payload);
        ctr::apply(cipher, iv, black_box(&mut buf));
    });
    let ct = buf.clone();
    let decrypt = median_of(|| {
        buf.copy_from_slice(&ct);
        ctr::apply(cipher, iv, black_box(&mut buf));
    });
    assert_eq!(buf, payload, "{name} round trip");
    BenchRow { name, encrypt, decrypt }
}

/// Times mask/demask, AES-128-CTR, Simon64/128-CTR and Speck64/128-CTR on
/// the same `payload_bytes` of data, single-threaded.
pub fn bench_ciphers(payload_bytes: usize) -> Result<BenchReport, CryptoError> {
    if payload_bytes < MIN_PAYLOAD {
        return Err(CryptoError::BlobShape(format!("payload {payload_bytes} < {MIN_PAYLOAD} bytes")));
    }
    let payload_bytes = payload_bytes / 16 * 16;
    let payload: Vec<u8> = (0..payload_bytes).map(|i| (i * 31 + 7) as u8).collect();
    let key = [0x42u8; 32];
    let session = [0x17u8; 16];

    let stream = MaskStream::new(&key, &session);
    let plain: Vec<u32> = payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let mut words = plain.clone();
    let encrypt = median_of(|| {
        words.copy_from_slice(&plain);
        stream.mask_words(black_box(&mut words), 1, Direction::ClientToServer).expect("counter in range");
    });
    let masked = words.clone();
    let decrypt = median_of(|| {
        words.copy_from_slice(&masked);
        stream.demask_words(black_box(&mut words), 1, Direction::ClientToServer).expect("counter in range");
    });
    assert_eq!(words, plain, "mask round trip");
    let mut rows = vec![BenchRow {
        name: "mask",
        encrypt,
        decrypt,
    }];

    let k16: [u8; 16] = key[..16].try_into().expect("16 bytes");
    rows.push(bench_ctr("aes128-ctr", &Aes128::new(&k16), &[0u8; 16], &payload));
    rows.push(bench_ctr("simon64/128-ctr", &Simon64_128::new(&k16), &[0u8; 8], &payload));
    rows.push(bench_ctr("speck64/128-ctr", &Speck64_128::new(&k16), &[0u8; 8], &payload));
    Ok(BenchReport { payload_bytes, rows })
}
