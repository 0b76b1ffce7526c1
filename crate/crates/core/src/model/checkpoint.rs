//! Binary checkpoint: `"GTCK"`, version byte, then one record per tensor
//! (`u16` name length, name, `u8` rank, `u32` dims, `f32` values), all
//! little-endian, until end of file.

use std::io::{Read, Write};

use thiserror::Error;

use super::params::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GTCK";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u8),
    #[error("truncated checkpoint record {0}")]
    Truncated(usize),
    #[error("malformed record {index}: {reason}")]
    Malformed { index: usize, reason: String },
}

pub fn write_checkpoint<T: Scalar, W: Write>(out: &mut W, sets: &[&ParamSet<T>]) -> Result<(), CheckpointError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.push(CHECKPOINT_VERSION);
    for set in sets {
        for (name, t) in set.iter() {
            let name_len = u16::try_from(name.len()).map_err(|_| CheckpointError::Malformed {
                index: 0,
                reason: format!("name {name} too long"),
            })?;
            buf.extend_from_slice(&name_len.to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.push(t.rank() as u8);
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                let f = v.to_f64_lossy() as f32;
                buf.extend_from_slice(&f.to_le_bytes());
            }
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    record: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(self.record))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

pub fn read_checkpoint<T: Scalar, R: Read>(input: &mut R) -> Result<ParamSet<T>, CheckpointError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 5 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Magic);
    }
    if bytes[4] != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(bytes[4]));
    }
    let mut cur = Cursor { bytes: &bytes, pos: 5, record: 0 };
    let mut set = ParamSet::new();
    while cur.pos < bytes.len() {
        let name_len = u16::from_le_bytes(cur.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|e| CheckpointError::Malformed {
                index: cur.record,
                reason: e.to_string(),
            })?
            .to_string();
        let rank = cur.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes")) as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or(CheckpointError::Truncated(cur.record))?;
        let raw = cur.take(n.checked_mul(4).ok_or(CheckpointError::Truncated(cur.record))?)?;
        let data: Vec<T> = raw
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| CheckpointError::Malformed {
            index: cur.record,
            reason: e.to_string(),
        })?;
        if set.get(&name).is_some() {
            return Err(CheckpointError::Malformed {
                index: cur.record,
                reason: format!("duplicate tensor {name}"),
            });
        }
        set.insert(name, t);
        cur.record += 1;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_bit_exact() {
        let mut set = ParamSet::<f32>::new();
        set.insert("ab", Tensor::from_f64(&[2], &[1.0, -2.0]).unwrap());
        let mut out = Vec::new();
        write_checkpoint(&mut out, &[&set]).unwrap();
        let mut expect = b"GTCK\x01".to_vec();
        expect.extend_from_slice(&[2, 0, b'a', b'b', 1, 2, 0, 0, 0]);
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(out, expect);
        let back: ParamSet<f32> = read_checkpoint(&mut out.as_slice()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn rejects_bad_headers_and_truncation() {
        assert!(matches!(read_checkpoint::<f32, _>(&mut &b"XXXX\x01"[..]), Err(CheckpointError::Magic)));
        assert!(matches!(read_checkpoint::<f32, _>(&mut &b"GTCK\x09"[..]), Err(CheckpointError::Version(9))));
        let mut set = ParamSet::<f32>::new();
        set.insert("w", Tensor::ones(&[3, 2]));
        let mut out = Vec::new();
        write_checkpoint(&mut out, &[&set]).unwrap();
        for cut in 6..out.len() {
            assert!(read_checkpoint::<f32, _>(&mut &out[..cut]).is_err(), "cut at {cut}");
        }
    }
}
