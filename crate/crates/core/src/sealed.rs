//! Sealing data to the private node.
//!
//! Anyone holding the private node's X25519 public key can seal; only the
//! holder of the matching secret can open. Each envelope uses a fresh
//! 256-bit content key under ChaCha20-Poly1305. The content key is wrapped
//! for the recipient with an ephemeral X25519 exchange, HKDF-SHA256 and
//! ChaCha20-Poly1305 again. The key id and wrapped key are bound into the
//! content tag, so changing any field makes opening fail.

use std::fmt;

use chacha20poly1305::aead::{AeadInPlace, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};
use hkdf::Hkdf;
use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use x25519_dalek::{PublicKey as X25519Public, StaticSecret};

pub const KEY_ID_LEN: usize = 16;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
const WRAP_INFO: &[u8] = b"lifeserver sealed-envelope v1 key-wrap";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SealError {
    #[error("entropy source unavailable: {0}")]
    EntropyUnavailable(String),
    #[error("invalid public key")]
    InvalidPublicKey,
    #[error("envelope authentication failed")]
    AuthError,
    #[error("envelope sealed to unknown key id {0}")]
    UnknownKeyId(KeyId),
    #[error("malformed envelope: {0}")]
    Malformed(&'static str),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyId(pub [u8; KEY_ID_LEN]);

impl KeyId {
    /// First 16 bytes of SHA-256 over the public key.
    pub fn derive(public_key: &PublicKey) -> KeyId {
        let digest = Sha256::digest(public_key.0);
        let mut id = [0u8; KEY_ID_LEN];
        id.copy_from_slice(&digest[..KEY_ID_LEN]);
        KeyId(id)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Option<KeyId> {
        let bytes = hex::decode(text).ok()?;
        Some(KeyId(bytes.try_into().ok()?))
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId({})", self.to_hex())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, SealError> {
        let arr: [u8; PUBLIC_KEY_LEN] = bytes.try_into().map_err(|_| SealError::InvalidPublicKey)?;
        Ok(PublicKey(arr))
    }

    pub fn key_id(&self) -> KeyId {
        KeyId::derive(self)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl TryFrom<String> for PublicKey {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        let bytes = hex::decode(&value).map_err(|e| e.to_string())?;
        PublicKey::from_slice(&bytes).map_err(|e| e.to_string())
    }
}

impl From<PublicKey> for String {
    fn from(value: PublicKey) -> Self {
        value.to_hex()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

/// The private node's key material. The secret never leaves its store.
#[derive(Clone)]
pub struct KeyPair {
    key_id: KeyId,
    public_key: PublicKey,
    secret: StaticSecret,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("key_id", &self.key_id)
            .field("public_key", &self.public_key)
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn from_secret_bytes(secret: [u8; 32]) -> Self {
        let secret = StaticSecret::from(secret);
        let public_key = PublicKey(X25519Public::from(&secret).to_bytes());
        Self {
            key_id: public_key.key_id(),
            public_key,
            secret,
        }
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public_key
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.secret.to_bytes()
    }
}

pub fn generate_keypair<R: RngCore + CryptoRng>(rng: &mut R) -> Result<KeyPair, SealError> {
    let mut secret = [0u8; 32];
    rng.try_fill_bytes(&mut secret)
        .map_err(|e| SealError::EntropyUnavailable(e.to_string()))?;
    Ok(KeyPair::from_secret_bytes(secret))
}

/// Keypair from the operating system's entropy source.
pub fn generate_keypair_os() -> Result<KeyPair, SealError> {
    generate_keypair(&mut OsRng)
}

#[derive(Clone, PartialEq, Eq)]
pub struct SealedEnvelope {
    pub key_id: KeyId,
    /// Ephemeral public key followed by the encrypted content key and its tag.
    pub wrapped_key: Vec<u8>,
    pub nonce: Vec<u8>,
    pub ciphertext: Vec<u8>,
    pub auth_tag: Vec<u8>,
}

impl fmt::Debug for SealedEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SealedEnvelope")
            .field("key_id", &self.key_id)
            .field("ciphertext_len", &self.ciphertext.len())
            .finish_non_exhaustive()
    }
}

impl SealedEnvelope {
    /// Fields in declaration order, each prefixed by a u32 big-endian length.
    pub fn to_bytes(&self) -> Vec<u8> {
        let fields: [&[u8]; 5] = [
            &self.key_id.0,
            &self.wrapped_key,
            &self.nonce,
            &self.ciphertext,
            &self.auth_tag,
        ];
        let mut out = Vec::with_capacity(20 + fields.iter().map(|f| f.len()).sum::<usize>());
        for field in fields {
            out.extend_from_slice(&(field.len() as u32).to_be_bytes());
            out.extend_from_slice(field);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SealError> {
        let mut rest = bytes;
        let mut take = || -> Result<Vec<u8>, SealError> {
            if rest.len() < 4 {
                return Err(SealError::Malformed("missing length prefix"));
            }
            let len = u32::from_be_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
            if rest.len() - 4 < len {
                return Err(SealError::Malformed("field overruns buffer"));
            }
            let field = rest[4..4 + len].to_vec();
            rest = &rest[4 + len..];
            Ok(field)
        };
        let key_id: [u8; KEY_ID_LEN] = take()?
            .try_into()
            .map_err(|_| SealError::Malformed("key id length"))?;
        let envelope = SealedEnvelope {
            key_id: KeyId(key_id),
            wrapped_key: take()?,
            nonce: take()?,
            ciphertext: take()?,
            auth_tag: take()?,
        };
        if !rest.is_empty() {
            return Err(SealError::Malformed("trailing bytes"));
        }
        Ok(envelope)
    }
}

fn wrap_cipher(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &PublicKey) -> ChaCha20Poly1305 {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(ephemeral);
    salt[32..].copy_from_slice(&recipient.0);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut kek = [0u8; 32];
    hk.expand(WRAP_INFO, &mut kek).expect("32 bytes is a valid HKDF length");
    ChaCha20Poly1305::new(Key::from_slice(&kek))
}

fn content_aad(key_id: &KeyId, wrapped_key: &[u8]) -> Vec<u8> {
    let mut aad = Vec::with_capacity(KEY_ID_LEN + wrapped_key.len());
    aad.extend_from_slice(&key_id.0);
    aad.extend_from_slice(wrapped_key);
    aad
}

pub fn seal(public_key: &PublicKey, plaintext: &[u8]) -> Result<SealedEnvelope, SealError> {
    seal_with_rng(&mut OsRng, public_key, plaintext)
}

pub fn seal_with_rng<R: RngCore + CryptoRng>(
    rng: &mut R,
    public_key: &PublicKey,
    plaintext: &[u8],
) -> Result<SealedEnvelope, SealError> {
    let entropy = |e: rand::Error| SealError::EntropyUnavailable(e.to_string());
    let mut content_key = [0u8; 32];
    let mut eph_bytes = [0u8; 32];
    let mut nonce = [0u8; NONCE_LEN];
    rng.try_fill_bytes(&mut content_key).map_err(entropy)?;
    rng.try_fill_bytes(&mut eph_bytes).map_err(entropy)?;
    rng.try_fill_bytes(&mut nonce).map_err(entropy)?;

    let recipient = X25519Public::from(public_key.0);
    let ephemeral = StaticSecret::from(eph_bytes);
    let ephemeral_public = X25519Public::from(&ephemeral).to_bytes();
    let shared = ephemeral.diffie_hellman(&recipient);
    if !shared.was_contributory() {
        return Err(SealError::InvalidPublicKey);
    }
    let key_id = public_key.key_id();

    // The wrap key is single-use, so a fixed nonce is safe here.
    let mut wrapped_content = content_key.to_vec();
    let wrap_tag = wrap_cipher(shared.as_bytes(), &ephemeral_public, public_key)
        .encrypt_in_place_detached(Nonce::from_slice(&[0u8; NONCE_LEN]), &key_id.0, &mut wrapped_content)
        .map_err(|_| SealError::InvalidPublicKey)?;
    let mut wrapped_key = Vec::with_capacity(32 + 32 + TAG_LEN);
    wrapped_key.extend_from_slice(&ephemeral_public);
    wrapped_key.extend_from_slice(&wrapped_content);
    wrapped_key.extend_from_slice(&wrap_tag);

    let mut ciphertext = plaintext.to_vec();
    let tag = ChaCha20Poly1305::new(Key::from_slice(&content_key))
        .encrypt_in_place_detached(
            Nonce::from_slice(&nonce),
            &content_aad(&key_id, &wrapped_key),
            &mut ciphertext,
        )
        .map_err(|_| SealError::Malformed("plaintext too long"))?;
    content_key.fill(0);

    Ok(SealedEnvelope {
        key_id,
        wrapped_key,
        nonce: nonce.to_vec(),
        ciphertext,
        auth_tag: tag.to_vec(),
    })
}

pub fn open(keypair: &KeyPair, envelope: &SealedEnvelope) -> Result<Vec<u8>, SealError> {
    if envelope.key_id != keypair.key_id {
        return Err(SealError::UnknownKeyId(envelope.key_id));
    }
    if envelope.wrapped_key.len() != 32 + 32 + TAG_LEN
        || envelope.nonce.len() != NONCE_LEN
        || envelope.auth_tag.len() != TAG_LEN
    {
        return Err(SealError::AuthError);
    }
    let ephemeral: [u8; 32] = envelope.wrapped_key[..32].try_into().expect("32 bytes");
    let shared = keypair.secret.diffie_hellman(&X25519Public::from(ephemeral));
    if !shared.was_contributory() {
        return Err(SealError::AuthError);
    }
    let mut content_key = envelope.wrapped_key[32..64].to_vec();
    let wrap_tag = Tag::from_slice(&envelope.wrapped_key[64..]);
    wrap_cipher(shared.as_bytes(), &ephemeral, &keypair.public_key)
        .decrypt_in_place_detached(
            Nonce::from_slice(&[0u8; NONCE_LEN]),
            &envelope.key_id.0,
            &mut content_key,
            wrap_tag,
        )
        .map_err(|_| SealError::AuthError)?;

    let mut plaintext = envelope.ciphertext.clone();
    let result = ChaCha20Poly1305::new(Key::from_slice(&content_key)).decrypt_in_place_detached(
        Nonce::from_slice(&envelope.nonce),
        &content_aad(&envelope.key_id, &envelope.wrapped_key),
        &mut plaintext,
        Tag::from_slice(&envelope.auth_tag),
    );
    content_key.fill(0);
    result.map_err(|_| SealError::AuthError)?;
    Ok(plaintext)
}
