//! Party key files: `key=value` lines holding the party's own secret and the
//! public keys it trusts.

use crate::error::CliError;
use gridsplit::crypto::keys::{secret_from_hex, secret_to_hex, Registry};
use gridsplit::crypto::{KeyPair, PublicKey, SecretKey};
use std::fs;
use std::path::Path;

pub struct ClientKeys {
    pub id: String,
    pub secret: SecretKey,
    pub server: PublicKey,
}

pub struct ServerKeys {
    pub secret: SecretKey,
    pub registry: Registry,
}

fn pk_hex(pk: &PublicKey) -> String {
    hex::encode(pk.to_compressed())
}

fn pk_from_hex(s: &str) -> Result<PublicKey, CliError> {
    let bytes = hex::decode(s.trim()).map_err(|e| CliError::Data(format!("public key: {e}")))?;
    PublicKey::from_sec1(&bytes).map_err(|e| CliError::Data(format!("public key: {e}")))
}

fn lines(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Data(format!("{} line {}: expected key=value", path.display(), i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn field<'a>(entries: &'a [(String, String)], key: &str, path: &Path) -> Result<&'a str, CliError> {
    entries
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| CliError::Data(format!("{}: missing {key}=", path.display())))
}

fn secret(entries: &[(String, String)], path: &Path) -> Result<SecretKey, CliError> {
    secret_from_hex(field(entries, "secret", path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_client(path: &Path) -> Result<ClientKeys, CliError> {
    let e = lines(path)?;
    if field(&e, "role", path)? != "client" {
        return Err(CliError::Data(format!("{} is not a client key file", path.display())));
    }
    Ok(ClientKeys {
        id: field(&e, "id", path)?.to_string(),
        secret: secret(&e, path)?,
        server: pk_from_hex(field(&e, "server", path)?)?,
    })
}

pub fn load_server(path: &Path) -> Result<ServerKeys, CliError> {
    let e = lines(path)?;
    if field(&e, "role", path)? != "server" {
        return Err(CliError::Data(format!("{} is not a server key file", path.display())));
    }
    let clients: String = e
        .iter()
        .filter(|(k, _)| k == "client")
        .map(|(_, v)| format!("{v}\n"))
        .collect();
    let registry = Registry::parse(&clients).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if registry.is_empty() {
        return Err(CliError::Data(format!("{}: no client= entries", path.display())));
    }
    Ok(ServerKeys {
        secret: secret(&e, path)?,
        registry,
    })
}

/// Writes `client.keys` and `server.keys` for one client and one server.
pub fn generate(dir: &Path, id: &str, client: &KeyPair, server: &KeyPair) -> Result<(), CliError> {
    if id.is_empty() || id.contains(',') || id.contains('=') || !id.bytes().all(|b| b.is_ascii_graphic()) {
        return Err(CliError::Usage(format!("invalid client id {id:?}")));
    }
    fs::create_dir_all(dir)?;
    let c = format!(
        "role=client\nid={id}\nsecret={}\nserver={}\n",
        secret_to_hex(&client.sk),
        pk_hex(&server.pk)
    );
    let s = format!(
        "role=server\nsecret={}\nclient={id},{}\n",
        secret_to_hex(&server.sk),
        pk_hex(&client.pk)
    );
    fs::write(dir.join("client.keys"), c)?;
    fs::write(dir.join("server.keys"), s)?;
    Ok(())
}
