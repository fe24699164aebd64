//! Authenticated encryption for datasets that must not be readable by the
//! storage peers. Key distribution is left to the data owner.
//!
//! Envelope layout: version byte `0x01`, 24-byte random nonce, then the
//! XChaCha20-Poly1305 ciphertext with its 16-byte tag.

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{XChaCha20Poly1305, XNonce};
use rand::RngCore;
use thiserror::Error;

pub const ENVELOPE_VERSION: u8 = 0x01;
pub const KEY_LEN: usize = 32;
const NONCE_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EnvelopeError {
    #[error("envelope failed authentication")]
    AuthFailure,
}

#[derive(Clone, PartialEq, Eq)]
pub struct EnvelopeKey([u8; KEY_LEN]);

impl EnvelopeKey {
    pub fn generate() -> Self {
        let mut k = [0u8; KEY_LEN];
        rand::rng().fill_bytes(&mut k);
        EnvelopeKey(k)
    }

    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        EnvelopeKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl std::fmt::Debug for EnvelopeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("EnvelopeKey(..)")
    }
}

pub fn encrypt_envelope(plaintext: &[u8], key: &EnvelopeKey) -> Vec<u8> {
    let cipher = XChaCha20Poly1305::new((&key.0).into());
    let mut nonce = [0u8; NONCE_LEN];
    rand::rng().fill_bytes(&mut nonce);
    let sealed = cipher
        .encrypt(XNonce::from_slice(&nonce), plaintext)
        .expect("in-memory encryption does not fail");
    let mut out = Vec::with_capacity(1 + NONCE_LEN + sealed.len());
    out.push(ENVELOPE_VERSION);
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&sealed);
    out
}

pub fn decrypt_envelope(envelope: &[u8], key: &EnvelopeKey) -> Result<Vec<u8>, EnvelopeError> {
    if envelope.len() < 1 + NONCE_LEN || envelope[0] != ENVELOPE_VERSION {
        return Err(EnvelopeError::AuthFailure);
    }
    let (nonce, body) = envelope[1..].split_at(NONCE_LEN);
    XChaCha20Poly1305::new((&key.0).into())
        .decrypt(XNonce::from_slice(nonce), body)
        .map_err(|_| EnvelopeError::AuthFailure)
}
