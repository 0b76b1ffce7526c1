//! Payload encodings carried inside frames.
//!
//! * M_CS1: `id_len u8 | party_id | mode u8 | Q_c [33]`
//! * M_SC1: `Q_s [33]`
//! * M_CS2: `purpose u8 | blob | target_len u32 | target bytes`
//! * M_SC2: `kind u8 | blob`
//! * blob: `frac_bits u8 | rank u8 | dims u32[rank] | words u32[numel]`
//! * ABORT: UTF-8 reason
//!
//! All integers little-endian.

use super::session::Mode;
use super::ProtocolError;
use crate::crypto::group::COMPRESSED_LEN;
use crate::crypto::MaskedBlob;

pub const MAX_RANK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Train = 0,
    Score = 1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ServerKind {
    Gradient = 0,
    Scores = 1,
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

fn bad(msg: impl Into<String>) -> ProtocolError {
    ProtocolError::Payload(msg.into())
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, at: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("payload truncated"))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn finish(&self) -> Result<(), ProtocolError> {
        if self.at == self.buf.len() {
            Ok(())
        } else {
            Err(bad(format!("{} trailing payload bytes", self.buf.len() - self.at)))
        }
    }
}

pub fn encode_client_hello(party_id: &str, mode: Mode, q: &[u8; COMPRESSED_LEN]) -> Vec<u8> {
    let mut out = vec![party_id.len() as u8];
    out.extend_from_slice(party_id.as_bytes());
    out.push(mode as u8);
    out.extend_from_slice(q);
    out
}

pub fn decode_client_hello(p: &[u8]) -> Result<(String, Mode, Vec<u8>), ProtocolError> {
    let mut r = Reader::new(p);
    let n = r.u8()? as usize;
    let id = std::str::from_utf8(r.take(n)?).map_err(|_| bad("party id is not UTF-8"))?.to_string();
    let mode = match r.u8()? {
        0 => Mode::Masked,
        1 => Mode::Plain,
        m => return Err(bad(format!("unknown mode {m}"))),
    };
    let q = r.take(COMPRESSED_LEN)?.to_vec();
    r.finish()?;
    Ok((id, mode, q))
}

pub fn decode_server_hello(p: &[u8]) -> Result<Vec<u8>, ProtocolError> {
    let mut r = Reader::new(p);
    let q = r.take(COMPRESSED_LEN)?.to_vec();
    r.finish()?;
    Ok(q)
}

fn write_blob(out: &mut Vec<u8>, b: &MaskedBlob) {
    out.push(b.frac_bits);
    out.push(b.shape.len() as u8);
    for &d in &b.shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.reserve(b.words.len() * 4);
    for w in &b.words {
        out.extend_from_slice(&w.to_le_bytes());
    }
}

fn read_blob(r: &mut Reader<'_>) -> Result<MaskedBlob, ProtocolError> {
    let frac_bits = r.u8()?;
    let rank = r.u8()? as usize;
    if rank > MAX_RANK {
        return Err(bad(format!("rank {rank} exceeds {MAX_RANK}")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut numel = 1usize;
    for _ in 0..rank {
        let d = r.u32()? as usize;
        numel = numel.checked_mul(d).ok_or_else(|| bad("shape overflows"))?;
        shape.push(d);
    }
    let bytes = r.take(numel.checked_mul(4).ok_or_else(|| bad("shape overflows"))?)?;
    let words = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(MaskedBlob { shape, frac_bits, words })
}

pub fn encode_client_data(purpose: Purpose, blob: &MaskedBlob, target: &[u8]) -> Vec<u8> {
    let mut out = vec![purpose as u8];
    write_blob(&mut out, blob);
    out.extend_from_slice(&(target.len() as u32).to_le_bytes());
    out.extend_from_slice(target);
    out
}

/// Readable by anyone on the path: the words stay masked and the target
/// stays encrypted.
pub fn decode_client_data(p: &[u8]) -> Result<(Purpose, MaskedBlob, Vec<u8>), ProtocolError> {
    let mut r = Reader::new(p);
    let purpose = match r.u8()? {
        0 => Purpose::Train,
        1 => Purpose::Score,
        x => return Err(bad(format!("unknown purpose {x}"))),
    };
    let blob = read_blob(&mut r)?;
    let n = r.u32()? as usize;
    let target = r.take(n)?.to_vec();
    r.finish()?;
    Ok((purpose, blob, target))
}

pub fn encode_server_data(kind: ServerKind, blob: &MaskedBlob) -> Vec<u8> {
    let mut out = vec![kind as u8];
    write_blob(&mut out, blob);
    out
}

pub fn decode_server_data(p: &[u8]) -> Result<(ServerKind, MaskedBlob), ProtocolError> {
    let mut r = Reader::new(p);
    let kind = match r.u8()? {
        0 => ServerKind::Gradient,
        1 => ServerKind::Scores,
        x => return Err(bad(format!("unknown server payload kind {x}"))),
    };
    let blob = read_blob(&mut r)?;
    r.finish()?;
    Ok((kind, blob))
}

pub fn encode_values(vals: impl IntoIterator<Item = f64>) -> Vec<u8> {
    vals.into_iter().flat_map(f64::to_le_bytes).collect()
}

pub fn decode_values(b: &[u8]) -> Result<Vec<f64>, ProtocolError> {
    if b.len() % 8 != 0 {
        return Err(bad("target length is not a multiple of 8"));
    }
    Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}
