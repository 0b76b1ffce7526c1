//! Key files (hex-encoded 32-byte scalar) and the public-key registry
//! (`party_id,hex(pk)` per line) standing in for a trusted authority.

use super::group::{PublicKey, SecretKey};
use super::CryptoError;
use std::collections::BTreeMap;
use std::path::Path;
use zeroize::Zeroize;

pub fn secret_to_hex(sk: &SecretKey) -> String {
    let mut b = sk.to_bytes();
    let s = hex::encode(b);
    b.zeroize();
    s
}

pub fn secret_from_hex(text: &str) -> Result<SecretKey, CryptoError> {
    let mut bytes = hex::decode(text.trim()).map_err(|e| CryptoError::KeyFile(e.to_string()))?;
    let arr: Result<[u8; 32], _> = bytes.as_slice().try_into();
    bytes.zeroize();
    let mut arr = arr.map_err(|_| CryptoError::KeyFile("secret key must be 32 bytes".into()))?;
    let sk = SecretKey::from_bytes(&arr);
    arr.zeroize();
    sk
}

pub fn load_secret(path: &Path) -> Result<SecretKey, CryptoError> {
    let text = std::fs::read_to_string(path).map_err(|e| CryptoError::KeyFile(format!("{}: {e}", path.display())))?;
    secret_from_hex(&text)
}

pub fn save_secret(path: &Path, sk: &SecretKey) -> Result<(), CryptoError> {
    std::fs::write(path, secret_to_hex(sk) + "\n").map_err(|e| CryptoError::KeyFile(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Registry {
    entries: BTreeMap<String, PublicKey>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 255 && id.bytes().all(|b| b.is_ascii_graphic() && b != b',')
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: &str, pk: PublicKey) -> Result<(), CryptoError> {
        if !valid_id(id) {
            return Err(CryptoError::KeyFile(format!("invalid party id {id:?}")));
        }
        self.entries.insert(id.to_string(), pk);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PublicKey> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self, CryptoError> {
        let mut reg = Registry::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| CryptoError::KeyFile(format!("registry line {}: {m}", n + 1));
            let (id, pk) = line.split_once(',').ok_or_else(|| err("expected party_id,hex(pk)"))?;
            let bytes = hex::decode(pk.trim()).map_err(|e| err(&e.to_string()))?;
            let pk = PublicKey::from_sec1(&bytes).map_err(|e| err(&e.to_string()))?;
            if reg.entries.contains_key(id.trim()) {
                return Err(err("duplicate party id"));
            }
            reg.insert(id.trim(), pk).map_err(|e| err(&e.to_string()))?;
        }
        Ok(reg)
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(id, pk)| format!("{id},{}\n", hex::encode(pk.to_compressed())))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, CryptoError> {
        let text = std::fs::read_to_string(path).map_err(|e| CryptoError::KeyFile(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CryptoError> {
        std::fs::write(path, self.render()).map_err(|e| CryptoError::KeyFile(format!("{}: {e}", path.display())))
    }
}
