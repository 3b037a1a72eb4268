//! Software authenticator.
//!
//! Simulates both roaming security keys and a phone acting as a platform
//! authenticator; the two differ only in [`DeviceKind`]. Private keys live in
//! the device's slot table and no method hands them out. The only way a key
//! leaves process memory is [`AuthenticatorDevice::seal`], which encrypts the
//! whole device under a caller-supplied local secret.

use std::collections::BTreeMap;
use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce as AeadNonce};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{system_clock, SharedClock};
use crate::crypto::{
    generate_keypair, sha256, Challenge, CryptoError, Entropy, Flags, KeyPair, PrivateKey, Purpose, SignedPayload,
};
use crate::ids::{CredentialId, DeviceId, KeyId, UserId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    SecurityKey,
    Smartphone,
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeviceKind::SecurityKey => "security_key",
            DeviceKind::Smartphone => "smartphone",
        })
    }
}

#[derive(Debug, Error)]
pub enum AuthenticatorError {
    #[error("device has been wiped")]
    DeviceWiped,
    #[error("challenge expired or already used")]
    ChallengeExpired,
    #[error("challenge purpose is {0:?}, not valid for this operation")]
    WrongPurpose(Purpose),
    #[error("no credential {0}")]
    NoSuchCredential(CredentialId),
    #[error("relying party mismatch: slot bound to {slot}, asked for {requested}")]
    RpMismatch { slot: String, requested: String },
    #[error("signature counter exhausted")]
    CounterExhausted,
    #[error("sealed device could not be opened")]
    SealBroken,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Registration output. Self-attested: the new key signs its own payload.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationResponse {
    pub credential_id: CredentialId,
    #[serde(with = "crate::encoding::b64")]
    pub public_key: Vec<u8>,
    pub device_id: DeviceId,
    pub kind: DeviceKind,
    pub signed_payload: SignedPayload,
    #[serde(with = "crate::encoding::b64")]
    pub signature: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionResponse {
    pub credential_id: CredentialId,
    pub signed_payload: SignedPayload,
    #[serde(with = "crate::encoding::b64")]
    pub signature: Vec<u8>,
}

#[derive(Clone, Debug)]
struct Slot {
    keypair: KeyPair,
    rp_id: String,
    user_id: UserId,
    counter: u32,
}

/// Instructions the server queues for a device until it next checks in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceDirective {
    Wipe,
}

/// Public, key-free view of one slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SlotInfo {
    pub credential_id: CredentialId,
    pub rp_id: String,
    pub user_id: UserId,
    pub counter: u32,
}

#[derive(Debug)]
pub struct AuthenticatorDevice {
    device_id: DeviceId,
    kind: DeviceKind,
    slots: BTreeMap<CredentialId, Slot>,
    wiped: bool,
    clock: SharedClock,
}

impl AuthenticatorDevice {
    pub fn new(kind: DeviceKind) -> Self {
        Self::with_clock(kind, system_clock())
    }

    pub fn with_clock(kind: DeviceKind, clock: SharedClock) -> Self {
        let device_id = DeviceId::new(format!("dev-{}", Entropy::os().hex_id(12)));
        Self {
            device_id,
            kind,
            slots: BTreeMap::new(),
            wiped: false,
            clock,
        }
    }

    pub fn device_id(&self) -> &DeviceId {
        &self.device_id
    }

    pub fn kind(&self) -> DeviceKind {
        self.kind
    }

    pub fn is_wiped(&self) -> bool {
        self.wiped
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> Vec<SlotInfo> {
        self.slots
            .iter()
            .map(|(id, s)| SlotInfo {
                credential_id: id.clone(),
                rp_id: s.rp_id.clone(),
                user_id: s.user_id.clone(),
                counter: s.counter,
            })
            .collect()
    }

    /// Credential ids bound to `rp_id` for `user_id`.
    pub fn credentials_for(&self, rp_id: &str, user_id: &UserId) -> Vec<CredentialId> {
        self.slots
            .iter()
            .filter(|(_, s)| s.rp_id == rp_id && &s.user_id == user_id)
            .map(|(id, _)| id.clone())
            .collect()
    }

    fn check_challenge(&self, challenge: &Challenge, purpose: Purpose) -> Result<(), AuthenticatorError> {
        if challenge.purpose() != purpose {
            return Err(AuthenticatorError::WrongPurpose(challenge.purpose()));
        }
        if !challenge.is_valid(self.clock.now_ms()) {
            return Err(AuthenticatorError::ChallengeExpired);
        }
        Ok(())
    }

    pub fn make_credential(
        &mut self,
        challenge: &Challenge,
        rp_id: &str,
        user_id: &UserId,
    ) -> Result<AttestationResponse, AuthenticatorError> {
        if self.wiped {
            return Err(AuthenticatorError::DeviceWiped);
        }
        self.check_challenge(challenge, Purpose::Registration)?;

        let keypair = generate_keypair()?;
        let credential_id = CredentialId::new(format!("cred-{}", keypair.key_id));
        let payload = SignedPayload::new(rp_id, Flags::with_user_present(true), 0, challenge.nonce());
        let signature = keypair.sign(&payload)?;
        let public_key = keypair.public_key.to_der();

        self.slots.insert(
            credential_id.clone(),
            Slot {
                keypair,
                rp_id: rp_id.to_owned(),
                user_id: user_id.clone(),
                counter: 0,
            },
        );

        Ok(AttestationResponse {
            credential_id,
            public_key,
            device_id: self.device_id.clone(),
            kind: self.kind,
            signed_payload: payload,
            signature,
        })
    }

    pub fn get_assertion(
        &mut self,
        challenge: &Challenge,
        rp_id: &str,
        credential_id: &CredentialId,
        user_present: bool,
    ) -> Result<AssertionResponse, AuthenticatorError> {
        if self.wiped {
            return Err(AuthenticatorError::DeviceWiped);
        }
        let now = self.clock.now_ms();
        let slot = self
            .slots
            .get_mut(credential_id)
            .ok_or_else(|| AuthenticatorError::NoSuchCredential(credential_id.clone()))?;
        if slot.rp_id != rp_id {
            return Err(AuthenticatorError::RpMismatch {
                slot: slot.rp_id.clone(),
                requested: rp_id.to_owned(),
            });
        }
        if challenge.purpose() != Purpose::Authentication {
            return Err(AuthenticatorError::WrongPurpose(challenge.purpose()));
        }
        if !challenge.is_valid(now) {
            return Err(AuthenticatorError::ChallengeExpired);
        }

        let next = slot.counter.checked_add(1).ok_or(AuthenticatorError::CounterExhausted)?;
        let payload = SignedPayload::new(&slot.rp_id, Flags::with_user_present(user_present), next, challenge.nonce());
        let signature = slot.keypair.sign(&payload)?;
        slot.counter = next;

        Ok(AssertionResponse {
            credential_id: credential_id.clone(),
            signed_payload: payload,
            signature,
        })
    }

    /// Destroys every slot. A wiped device stays dead; re-enrollment needs a
    /// new device.
    pub fn wipe(&mut self) -> usize {
        let destroyed = self.slots.len();
        self.slots.clear();
        self.wiped = true;
        destroyed
    }

    pub fn apply_directives(&mut self, directives: &[DeviceDirective]) -> usize {
        directives
            .iter()
            .map(|d| match d {
                DeviceDirective::Wipe => self.wipe(),
            })
            .sum()
    }

    /// Bit-for-bit copy of the device, standing in for cloned hardware in
    /// attack simulations. Both copies share slot keys and counters at the
    /// fork point and evolve independently afterwards.
    pub fn fork(&self) -> Self {
        Self {
            device_id: self.device_id.clone(),
            kind: self.kind,
            slots: self.slots.clone(),
            wiped: self.wiped,
            clock: self.clock.clone(),
        }
    }

    /// Encrypts the full device state, private keys included, under a key
    /// derived from `secret`.
    pub fn seal(&self, secret: &[u8]) -> Result<SealedDevice, AuthenticatorError> {
        let snapshot = Snapshot {
            wiped: self.wiped,
            slots: self
                .slots
                .iter()
                .map(|(id, s)| {
                    Ok(SlotSnapshot {
                        credential_id: id.clone(),
                        key_id: s.keypair.key_id.clone(),
                        rp_id: s.rp_id.clone(),
                        user_id: s.user_id.clone(),
                        counter: s.counter,
                        private_key: s.keypair.private_key.to_pkcs8_der()?,
                    })
                })
                .collect::<Result<_, CryptoError>>()?,
        };
        let plaintext = serde_json::to_vec(&snapshot).map_err(|e| CryptoError::Encoding(e.to_string()))?;
        let nonce: [u8; 12] = Entropy::os().array();
        let ciphertext = seal_cipher(secret, &self.device_id)
            .encrypt(AeadNonce::from_slice(&nonce), plaintext.as_slice())
            .map_err(|_| AuthenticatorError::SealBroken)?;
        Ok(SealedDevice {
            device_id: self.device_id.clone(),
            kind: self.kind,
            nonce: nonce.to_vec(),
            ciphertext,
        })
    }

    pub fn unseal(sealed: &SealedDevice, secret: &[u8], clock: SharedClock) -> Result<Self, AuthenticatorError> {
        let nonce: [u8; 12] = sealed
            .nonce
            .as_slice()
            .try_into()
            .map_err(|_| AuthenticatorError::SealBroken)?;
        let plaintext = seal_cipher(secret, &sealed.device_id)
            .decrypt(AeadNonce::from_slice(&nonce), sealed.ciphertext.as_slice())
            .map_err(|_| AuthenticatorError::SealBroken)?;
        let snapshot: Snapshot = serde_json::from_slice(&plaintext).map_err(|_| AuthenticatorError::SealBroken)?;
        let mut slots = BTreeMap::new();
        for s in snapshot.slots {
            let private = PrivateKey::from_pkcs8_der(&s.private_key)?;
            slots.insert(
                s.credential_id,
                Slot {
                    keypair: KeyPair::from_private(s.key_id, private),
                    rp_id: s.rp_id,
                    user_id: s.user_id,
                    counter: s.counter,
                },
            );
        }
        Ok(Self {
            device_id: sealed.device_id.clone(),
            kind: sealed.kind,
            slots,
            wiped: snapshot.wiped,
            clock,
        })
    }
}

fn seal_cipher(secret: &[u8], device_id: &DeviceId) -> ChaCha20Poly1305 {
    let mut material = b"passgate-device-seal/v1\0".to_vec();
    material.extend_from_slice(device_id.as_str().as_bytes());
    material.push(0);
    material.extend_from_slice(secret);
    ChaCha20Poly1305::new(Key::from_slice(&sha256(&material)))
}

/// Encrypted device state. Only the device id and kind are readable without
/// the local secret.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedDevice {
    pub device_id: DeviceId,
    pub kind: DeviceKind,
    #[serde(with = "crate::encoding::b64")]
    pub nonce: Vec<u8>,
    #[serde(with = "crate::encoding::b64")]
    pub ciphertext: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    wiped: bool,
    slots: Vec<SlotSnapshot>,
}

#[derive(Serialize, Deserialize)]
struct SlotSnapshot {
    credential_id: CredentialId,
    key_id: KeyId,
    rp_id: String,
    user_id: UserId,
    counter: u32,
    #[serde(with = "crate::encoding::b64")]
    private_key: Vec<u8>,
}
