//! Deterministic long-term keys and sessions for protocol tests.

use gridsplit::crypto::keys::Registry;
use gridsplit::crypto::{KeyPair, SecretKey};
use gridsplit::protocol::{ClientSession, ServerSession, SessionConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::sync::Arc;

pub const CLIENT_ID: &str = "meter-0001";

pub fn keypair(tag: u8) -> KeyPair {
    let mut b = [tag; 32];
    b[0] = 0x01;
    KeyPair::from_secret(SecretKey::from_bytes(&b).unwrap())
}

pub struct Parties {
    pub client: KeyPair,
    pub server: KeyPair,
    pub registry: Arc<Registry>,
}

pub fn parties() -> Parties {
    let client = keypair(0x11);
    let server = keypair(0x22);
    let mut reg = Registry::new();
    reg.insert(CLIENT_ID, client.pk).unwrap();
    Parties {
        client,
        server,
        registry: Arc::new(reg),
    }
}

pub fn sessions(cfg: SessionConfig) -> (ClientSession, ServerSession) {
    let p = parties();
    let c = ClientSession::new(CLIENT_ID, p.client.sk.clone(), p.server.pk, cfg.clone());
    let s = ServerSession::new(p.server.sk.clone(), p.registry.clone(), cfg);
    (c, s)
}

pub fn established(cfg: SessionConfig, seed: u64) -> (ClientSession, ServerSession) {
    let (mut c, mut s) = sessions(cfg);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let m1 = c.hello(&mut rng).unwrap();
    let m2 = s.respond(&m1, &mut rng).unwrap();
    c.receive_hello(&m2).unwrap();
    (c, s)
}
