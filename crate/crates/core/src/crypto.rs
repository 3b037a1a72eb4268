//! Signing primitives shared by the authenticator and the relying party.
//!
//! Keys are RSA-2048. Signatures use RSASSA-PSS with SHA-256, so signing the
//! same payload twice yields two different byte strings that both verify.
//! What gets signed is always a [`SignedPayload`], a fixed 69-byte record:
//!
//! ```text
//! offset  len  field
//!      0   32  SHA-256(rp_id)
//!     32    1  flags (bit 0 = user present)
//!     33    4  signature counter, big-endian
//!     37   32  SHA-256(challenge nonce)
//! ```

use std::fmt;

use parking_lot::Mutex;
use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rsa::pkcs8::{DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey};
use rsa::pss::{BlindedSigningKey, Signature, VerifyingKey};
use rsa::signature::{RandomizedSigner, SignatureEncoding, Verifier};
use rsa::traits::PublicKeyParts;
use rsa::{RsaPrivateKey, RsaPublicKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ids::{KeyId, UserId};

pub const RSA_MODULUS_BITS: usize = 2048;
pub const SIGNATURE_LEN: usize = RSA_MODULUS_BITS / 8;
pub const NONCE_LEN: usize = 32;
pub const PAYLOAD_LEN: usize = 69;
pub const DEFAULT_CHALLENGE_TTL_MS: u64 = 120_000;

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("key generation failed: {0}")]
    Generation(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("signing failed: {0}")]
    Signing(String),
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// Source of random bytes for nonces, identifiers and tokens.
///
/// `Os` reads the operating system CSPRNG. `Seeded` runs ChaCha20 from a fixed
/// seed for reproducible runs. Key generation never goes through this type.
pub enum Entropy {
    Os,
    Seeded(Mutex<ChaCha20Rng>),
}

impl Entropy {
    pub fn os() -> Self {
        Entropy::Os
    }

    pub fn seeded(seed: u64) -> Self {
        Entropy::Seeded(Mutex::new(ChaCha20Rng::seed_from_u64(seed)))
    }

    pub fn fill(&self, buf: &mut [u8]) {
        match self {
            Entropy::Os => OsRng.fill_bytes(buf),
            Entropy::Seeded(rng) => rng.lock().fill_bytes(buf),
        }
    }

    pub fn array<const N: usize>(&self) -> [u8; N] {
        let mut out = [0u8; N];
        self.fill(&mut out);
        out
    }

    /// `bytes` random bytes rendered as lowercase hex.
    pub fn hex_id(&self, bytes: usize) -> String {
        let mut buf = vec![0u8; bytes];
        self.fill(&mut buf);
        buf.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl Default for Entropy {
    fn default() -> Self {
        Entropy::Os
    }
}

impl fmt::Debug for Entropy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entropy::Os => f.write_str("Entropy::Os"),
            Entropy::Seeded(_) => f.write_str("Entropy::Seeded"),
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey(RsaPublicKey);

impl PublicKey {
    /// SubjectPublicKeyInfo DER.
    pub fn to_der(&self) -> Vec<u8> {
        self.0
            .to_public_key_der()
            .map(|doc| doc.as_bytes().to_vec())
            .unwrap_or_default()
    }

    pub fn from_der(der: &[u8]) -> Result<Self, CryptoError> {
        RsaPublicKey::from_public_key_der(der)
            .map(PublicKey)
            .map_err(|e| CryptoError::Encoding(e.to_string()))
    }

    pub fn modulus_bits(&self) -> usize {
        self.0.n().bits()
    }

    pub fn modulus_bytes(&self) -> Vec<u8> {
        self.0.n().to_bytes_be()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey(rsa-{})", self.modulus_bits())
    }
}

/// Private half of a keypair. Has no serialization path of its own and
/// redacts itself from debug output.
#[derive(Clone)]
pub struct PrivateKey(RsaPrivateKey);

impl PrivateKey {
    pub(crate) fn to_pkcs8_der(&self) -> Result<Vec<u8>, CryptoError> {
        self.0
            .to_pkcs8_der()
            .map(|doc| doc.as_bytes().to_vec())
            .map_err(|e| CryptoError::Encoding(e.to_string()))
    }

    pub(crate) fn from_pkcs8_der(der: &[u8]) -> Result<Self, CryptoError> {
        RsaPrivateKey::from_pkcs8_der(der)
            .map(PrivateKey)
            .map_err(|e| CryptoError::Encoding(e.to_string()))
    }

    fn public_key(&self) -> PublicKey {
        PublicKey(self.0.to_public_key())
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(<redacted>)")
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair {
    pub key_id: KeyId,
    pub public_key: PublicKey,
    pub(crate) private_key: PrivateKey,
}

impl KeyPair {
    pub(crate) fn from_private(key_id: KeyId, private_key: PrivateKey) -> Self {
        Self {
            key_id,
            public_key: private_key.public_key(),
            private_key,
        }
    }

    pub fn sign(&self, payload: &SignedPayload) -> Result<Vec<u8>, CryptoError> {
        sign_payload(&self.private_key, payload)
    }
}

/// Fresh RSA-2048 keypair from the operating system CSPRNG.
pub fn generate_keypair() -> Result<KeyPair, CryptoError> {
    let mut rng = OsRng;
    let private = RsaPrivateKey::new(&mut rng, RSA_MODULUS_BITS)
        .map_err(|e| CryptoError::Generation(e.to_string()))?;
    let mut id = [0u8; 16];
    rng.try_fill_bytes(&mut id)
        .map_err(|e| CryptoError::Generation(e.to_string()))?;
    let key_id = KeyId::new(id.iter().map(|b| format!("{b:02x}")).collect::<String>());
    Ok(KeyPair::from_private(key_id, PrivateKey(private)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Flags(pub u8);

impl Flags {
    pub const USER_PRESENT: u8 = 0x01;

    pub fn with_user_present(present: bool) -> Self {
        Flags(if present { Self::USER_PRESENT } else { 0 })
    }

    pub fn user_present(self) -> bool {
        self.0 & Self::USER_PRESENT != 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedPayload {
    #[serde(with = "crate::encoding::b64_array")]
    pub rp_id_hash: [u8; 32],
    pub flags: Flags,
    pub counter: u32,
    #[serde(with = "crate::encoding::b64_array")]
    pub challenge_hash: [u8; 32],
}

impl SignedPayload {
    pub fn new(rp_id: &str, flags: Flags, counter: u32, nonce: &Nonce) -> Self {
        Self {
            rp_id_hash: sha256(rp_id.as_bytes()),
            flags,
            counter,
            challenge_hash: sha256(nonce.as_bytes()),
        }
    }

    pub fn to_bytes(&self) -> [u8; PAYLOAD_LEN] {
        let mut out = [0u8; PAYLOAD_LEN];
        out[..32].copy_from_slice(&self.rp_id_hash);
        out[32] = self.flags.0;
        out[33..37].copy_from_slice(&self.counter.to_be_bytes());
        out[37..].copy_from_slice(&self.challenge_hash);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != PAYLOAD_LEN {
            return Err(CryptoError::Encoding(format!(
                "payload must be {PAYLOAD_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        let mut rp_id_hash = [0u8; 32];
        rp_id_hash.copy_from_slice(&bytes[..32]);
        let mut counter = [0u8; 4];
        counter.copy_from_slice(&bytes[33..37]);
        let mut challenge_hash = [0u8; 32];
        challenge_hash.copy_from_slice(&bytes[37..]);
        Ok(Self {
            rp_id_hash,
            flags: Flags(bytes[32]),
            counter: u32::from_be_bytes(counter),
            challenge_hash,
        })
    }
}

pub fn sign_payload(private_key: &PrivateKey, payload: &SignedPayload) -> Result<Vec<u8>, CryptoError> {
    sign_serialized(private_key, &payload.to_bytes())
}

/// Signs an already-serialized payload, rejecting anything that is not a
/// well-formed 69-byte record.
pub fn sign_serialized(private_key: &PrivateKey, serialized: &[u8]) -> Result<Vec<u8>, CryptoError> {
    SignedPayload::from_bytes(serialized)?;
    let signer = BlindedSigningKey::<Sha256>::new(private_key.0.clone());
    let sig = signer
        .try_sign_with_rng(&mut OsRng, serialized)
        .map_err(|e| CryptoError::Signing(e.to_string()))?;
    Ok(sig.to_vec())
}

/// Never errors: anything malformed is simply not a valid signature.
pub fn verify_signature(public_key: &PublicKey, payload: &SignedPayload, signature: &[u8]) -> bool {
    verify_serialized(public_key, &payload.to_bytes(), signature)
}

pub fn verify_serialized(public_key: &PublicKey, serialized: &[u8], signature: &[u8]) -> bool {
    if serialized.len() != PAYLOAD_LEN || signature.len() != public_key.0.size() {
        return false;
    }
    let Ok(sig) = Signature::try_from(signature) else {
        return false;
    };
    VerifyingKey::<Sha256>::new(public_key.0.clone())
        .verify(serialized, &sig)
        .is_ok()
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nonce(#[serde(with = "crate::encoding::b64_array")] [u8; NONCE_LEN]);

impl Nonce {
    pub fn from_bytes(bytes: [u8; NONCE_LEN]) -> Self {
        Nonce(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(Nonce)
    }

    pub fn as_bytes(&self) -> &[u8; NONCE_LEN] {
        &self.0
    }

    pub fn to_b64(&self) -> String {
        crate::encoding::to_b64(&self.0)
    }

    pub fn from_b64(text: &str) -> Option<Self> {
        crate::encoding::from_b64(text).ok().and_then(|raw| Self::from_slice(&raw))
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonce({})", self.to_b64())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Registration,
    Authentication,
}

/// Single-use server nonce.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    nonce: Nonce,
    rp_id: String,
    user_id: UserId,
    purpose: Purpose,
    issued_at_ms: u64,
    ttl_ms: u64,
    consumed: bool,
}

impl Challenge {
    pub fn issue(
        entropy: &Entropy,
        rp_id: &str,
        user_id: UserId,
        purpose: Purpose,
        ttl_ms: u64,
        now_ms: u64,
    ) -> Result<Self, CryptoError> {
        if rp_id.is_empty() {
            return Err(CryptoError::Validation("rp_id must not be empty".into()));
        }
        if ttl_ms == 0 {
            return Err(CryptoError::Validation("ttl must be positive".into()));
        }
        Ok(Self {
            nonce: Nonce(entropy.array()),
            rp_id: rp_id.to_owned(),
            user_id,
            purpose,
            issued_at_ms: now_ms,
            ttl_ms,
            consumed: false,
        })
    }

    pub fn nonce(&self) -> &Nonce {
        &self.nonce
    }

    pub fn rp_id(&self) -> &str {
        &self.rp_id
    }

    pub fn user_id(&self) -> &UserId {
        &self.user_id
    }

    pub fn purpose(&self) -> Purpose {
        self.purpose
    }

    pub fn issued_at_ms(&self) -> u64 {
        self.issued_at_ms
    }

    pub fn ttl_ms(&self) -> u64 {
        self.ttl_ms
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub fn is_expired(&self, now_ms: u64) -> bool {
        now_ms >= self.issued_at_ms.saturating_add(self.ttl_ms)
    }

    pub fn is_valid(&self, now_ms: u64) -> bool {
        !self.consumed && !self.is_expired(now_ms)
    }

    /// Marks the challenge used. Returns `false` if it already was.
    pub fn consume(&mut self) -> bool {
        !std::mem::replace(&mut self.consumed, true)
    }
}

/// Issues a challenge from the OS CSPRNG stamped with the system clock.
pub fn new_challenge(rp_id: &str, user_id: UserId, purpose: Purpose, ttl_ms: u64) -> Result<Challenge, CryptoError> {
    use crate::clock::{Clock, SystemClock};
    Challenge::issue(&Entropy::Os, rp_id, user_id, purpose, ttl_ms, SystemClock.now_ms())
}
