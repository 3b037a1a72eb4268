//! Relying party / single sign-on server.
//!
//! Runs registration and authentication ceremonies against a credential store
//! and the identity registry. All mutable state sits behind one lock, so
//! challenge consumption and counter updates are atomic check-and-set steps:
//! two racing `finish_authentication` calls on one challenge cannot both win.

mod identity;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use identity::UserIdentity;
use identity::IdentityRegistry;
pub use store::StoreRecord;

use crate::authenticator::{AssertionResponse, AttestationResponse, DeviceDirective, DeviceKind};
use crate::clock::{system_clock, SharedClock};
use crate::crypto::{
    sha256, verify_signature, Challenge, CryptoError, Entropy, Nonce, PublicKey, Purpose, DEFAULT_CHALLENGE_TTL_MS,
};
use crate::ids::{CredentialId, DeviceId, UserId};
use crate::orchestrator::{AuthSession, SessionState};

pub const DEFAULT_TOKEN_TTL_MS: u64 = 3_600_000;

#[derive(Debug, Error)]
pub enum RpError {
    #[error("no such user {0}")]
    NoSuchUser(UserId),
    #[error("user {0} has no active credential for this relying party")]
    NoCredential(UserId),
    #[error("email {0} is already registered")]
    EmailTaken(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("registration rejected: {0}")]
    Registration(VerificationFailure),
    #[error("credential {0} already registered")]
    DuplicateCredential(CredentialId),
    #[error("no such credential {0}")]
    NoSuchCredential(CredentialId),
    #[error("no such device {0}")]
    NoSuchDevice(DeviceId),
    #[error("credential {0} is already {1:?}")]
    AlreadyTerminal(CredentialId, CredentialState),
    #[error("session is not complete")]
    SessionNotReady,
    #[error("session belongs to a different user")]
    SessionUserMismatch,
    #[error("store I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("store record {line}: {message}")]
    Corrupt { line: usize, message: String },
}

impl From<CryptoError> for RpError {
    fn from(e: CryptoError) -> Self {
        RpError::Validation(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CredentialState {
    Active,
    Revoked,
    Wiped,
}

impl CredentialState {
    pub fn is_terminal(self) -> bool {
        !matches!(self, CredentialState::Active)
    }
}

/// A registered public key. Only ever holds the public half.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub credential_id: CredentialId,
    pub user_id: UserId,
    pub rp_id: String,
    pub device_id: DeviceId,
    #[serde(with = "crate::encoding::b64")]
    pub public_key: Vec<u8>,
    pub kind: DeviceKind,
    pub counter_seen: u32,
    pub state: CredentialState,
    pub created_at_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationFailure {
    BadSignature,
    RpMismatch,
    ChallengeUnknown,
    ChallengeExpired,
    ChallengeReused,
    CounterRegression,
    CredentialInactive,
}

impl fmt::Display for VerificationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VerificationFailure::BadSignature => "bad signature",
            VerificationFailure::RpMismatch => "relying party mismatch",
            VerificationFailure::ChallengeUnknown => "unknown challenge",
            VerificationFailure::ChallengeExpired => "challenge expired",
            VerificationFailure::ChallengeReused => "challenge already used",
            VerificationFailure::CounterRegression => "signature counter did not increase",
            VerificationFailure::CredentialInactive => "credential not active",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub ok: bool,
    pub failure: Option<VerificationFailure>,
}

impl VerificationResult {
    pub fn success() -> Self {
        Self { ok: true, failure: None }
    }

    pub fn failed(failure: VerificationFailure) -> Self {
        Self {
            ok: false,
            failure: Some(failure),
        }
    }
}

/// Bearer token handed to the origin device once a login completes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    #[serde(with = "crate::encoding::b64_array")]
    pub token: [u8; 32],
    pub user_id: UserId,
    pub expires_at_ms: u64,
}

#[derive(Clone, Debug)]
pub struct RpConfig {
    pub rp_id: String,
    pub challenge_ttl_ms: u64,
    pub token_ttl_ms: u64,
}

impl RpConfig {
    pub fn new(rp_id: impl Into<String>) -> Self {
        Self {
            rp_id: rp_id.into(),
            challenge_ttl_ms: DEFAULT_CHALLENGE_TTL_MS,
            token_ttl_ms: DEFAULT_TOKEN_TTL_MS,
        }
    }
}

#[derive(Debug, Default)]
struct RpState {
    users: IdentityRegistry,
    credentials: BTreeMap<CredentialId, Credential>,
    challenges: HashMap<Nonce, Challenge>,
    tokens: HashMap<[u8; 32], SessionToken>,
    directives: HashMap<DeviceId, Vec<DeviceDirective>>,
}

impl RpState {
    fn user_has_active(&self, user_id: &UserId, rp_id: &str) -> bool {
        self.credentials
            .values()
            .any(|c| &c.user_id == user_id && c.rp_id == rp_id && c.state == CredentialState::Active)
    }

    /// Challenges are kept for one extra ttl past expiry so late or replayed
    /// submissions still get a precise failure instead of "unknown".
    fn purge_expired(&mut self, now_ms: u64) {
        self.challenges
            .retain(|_, c| now_ms < c.issued_at_ms().saturating_add(c.ttl_ms().saturating_mul(2)));
        self.tokens.retain(|_, t| t.expires_at_ms > now_ms);
    }
}

#[derive(Debug)]
pub struct RpServer {
    config: RpConfig,
    clock: SharedClock,
    entropy: Entropy,
    state: Mutex<RpState>,
}

impl RpServer {
    pub fn new(config: RpConfig) -> Self {
        Self::with_parts(config, system_clock(), Entropy::os())
    }

    pub fn with_parts(config: RpConfig, clock: SharedClock, entropy: Entropy) -> Self {
        Self {
            config,
            clock,
            entropy,
            state: Mutex::new(RpState::default()),
        }
    }

    pub fn rp_id(&self) -> &str {
        &self.config.rp_id
    }

    pub fn config(&self) -> &RpConfig {
        &self.config
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    pub fn entropy(&self) -> &Entropy {
        &self.entropy
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    // ---- identity registry ----

    pub fn register_user(&self, email: &str, display_name: &str) -> Result<UserIdentity, RpError> {
        let user_id = UserId::new(format!("user-{}", self.entropy.hex_id(8)));
        let now = self.now_ms();
        self.state.lock().users.register(user_id, email, display_name, now)
    }

    pub fn user(&self, user_id: &UserId) -> Option<UserIdentity> {
        self.state.lock().users.get(user_id).cloned()
    }

    pub fn user_by_email(&self, email: &str) -> Option<UserIdentity> {
        self.state.lock().users.by_email(email).cloned()
    }

    pub fn users(&self) -> Vec<UserIdentity> {
        self.state.lock().users.iter().cloned().collect()
    }

    pub(crate) fn set_face_ref(&self, user_id: &UserId, reference: String) -> Result<(), RpError> {
        self.state.lock().users.set_face_ref(user_id, reference)
    }

    // ---- registration ----

    pub fn begin_registration(&self, user_id: &UserId, rp_id: &str) -> Result<Challenge, RpError> {
        let now = self.now_ms();
        let mut st = self.state.lock();
        if st.users.get(user_id).is_none() {
            return Err(RpError::NoSuchUser(user_id.clone()));
        }
        st.purge_expired(now);
        let challenge = Challenge::issue(
            &self.entropy,
            rp_id,
            user_id.clone(),
            Purpose::Registration,
            self.config.challenge_ttl_ms,
            now,
        )?;
        st.challenges.insert(*challenge.nonce(), challenge.clone());
        Ok(challenge)
    }

    pub fn finish_registration(
        &self,
        attestation: &AttestationResponse,
        challenge_nonce: &Nonce,
    ) -> Result<Credential, RpError> {
        use VerificationFailure::*;
        let now = self.now_ms();
        let mut st = self.state.lock();

        let challenge = match st.challenges.get_mut(challenge_nonce) {
            Some(c) if c.purpose() == Purpose::Registration => c,
            _ => return Err(RpError::Registration(ChallengeUnknown)),
        };
        if challenge.is_consumed() {
            return Err(RpError::Registration(ChallengeReused));
        }
        // single use from here on, whatever the outcome
        challenge.consume();
        if challenge.is_expired(now) {
            return Err(RpError::Registration(ChallengeExpired));
        }
        let challenge = challenge.clone();

        let payload = &attestation.signed_payload;
        let signature_ok = PublicKey::from_der(&attestation.public_key)
            .map(|pk| verify_signature(&pk, payload, &attestation.signature))
            .unwrap_or(false);
        if !signature_ok || payload.challenge_hash != sha256(challenge_nonce.as_bytes()) {
            return Err(RpError::Registration(BadSignature));
        }
        if payload.rp_id_hash != sha256(challenge.rp_id().as_bytes()) {
            return Err(RpError::Registration(RpMismatch));
        }
        if st.credentials.contains_key(&attestation.credential_id) {
            return Err(RpError::DuplicateCredential(attestation.credential_id.clone()));
        }

        let credential = Credential {
            credential_id: attestation.credential_id.clone(),
            user_id: challenge.user_id().clone(),
            rp_id: challenge.rp_id().to_owned(),
            device_id: attestation.device_id.clone(),
            public_key: attestation.public_key.clone(),
            kind: attestation.kind,
            counter_seen: 0,
            state: CredentialState::Active,
            created_at_ms: now,
        };
        st.credentials.insert(credential.credential_id.clone(), credential.clone());
        Ok(credential)
    }

    // ---- authentication ----

    pub fn begin_authentication(&self, user_id: &UserId, rp_id: &str) -> Result<Challenge, RpError> {
        let now = self.now_ms();
        let mut st = self.state.lock();
        if st.users.get(user_id).is_none() {
            return Err(RpError::NoSuchUser(user_id.clone()));
        }
        if !st.user_has_active(user_id, rp_id) {
            return Err(RpError::NoCredential(user_id.clone()));
        }
        st.purge_expired(now);
        let challenge = Challenge::issue(
            &self.entropy,
            rp_id,
            user_id.clone(),
            Purpose::Authentication,
            self.config.challenge_ttl_ms,
            now,
        )?;
        st.challenges.insert(*challenge.nonce(), challenge.clone());
        Ok(challenge)
    }

    /// Verifies an assertion. Checks run in a fixed order and the first
    /// failing one is reported:
    ///
    /// 1. credential exists and is active
    /// 2. challenge is known (authentication purpose, issued to the credential's user)
    /// 3. challenge unconsumed
    /// 4. challenge unexpired
    /// 5. signature valid and bound to this challenge
    /// 6. payload rp hash equals this server's rp_id
    /// 7. counter strictly above the last one seen
    ///
    /// Failures at steps 1–2 leave the challenge untouched; every later
    /// failure burns it.
    pub fn finish_authentication(&self, assertion: &AssertionResponse, challenge_nonce: &Nonce) -> VerificationResult {
        use VerificationFailure::*;
        let now = self.now_ms();
        let mut st = self.state.lock();
        let st = &mut *st;

        let credential = match st.credentials.get_mut(&assertion.credential_id) {
            Some(c) if c.state == CredentialState::Active => c,
            _ => return VerificationResult::failed(CredentialInactive),
        };
        let challenge = match st.challenges.get_mut(challenge_nonce) {
            Some(c) if c.purpose() == Purpose::Authentication && c.user_id() == &credential.user_id => c,
            _ => return VerificationResult::failed(ChallengeUnknown),
        };
        if !challenge.consume() {
            return VerificationResult::failed(ChallengeReused);
        }
        if challenge.is_expired(now) {
            return VerificationResult::failed(ChallengeExpired);
        }

        let payload = &assertion.signed_payload;
        let signature_ok = PublicKey::from_der(&credential.public_key)
            .map(|pk| verify_signature(&pk, payload, &assertion.signature))
            .unwrap_or(false);
        if !signature_ok || payload.challenge_hash != sha256(challenge_nonce.as_bytes()) {
            return VerificationResult::failed(BadSignature);
        }
        if payload.rp_id_hash != sha256(self.config.rp_id.as_bytes()) {
            return VerificationResult::failed(RpMismatch);
        }
        if payload.counter <= credential.counter_seen {
            return VerificationResult::failed(CounterRegression);
        }
        credential.counter_seen = payload.counter;
        VerificationResult::success()
    }

    /// Number of issued challenges still held server-side and not yet used.
    pub fn pending_challenges(&self, user_id: &UserId) -> usize {
        let now = self.now_ms();
        self.state
            .lock()
            .challenges
            .values()
            .filter(|c| c.user_id() == user_id && c.is_valid(now))
            .count()
    }

    // ---- sessions ----

    pub fn issue_session(&self, user_id: &UserId, completed: &AuthSession) -> Result<SessionToken, RpError> {
        if completed.state != SessionState::Complete || !completed.has_all_layers() {
            return Err(RpError::SessionNotReady);
        }
        if &completed.user_id != user_id {
            return Err(RpError::SessionUserMismatch);
        }
        let now = self.now_ms();
        let token = SessionToken {
            token: self.entropy.array(),
            user_id: user_id.clone(),
            expires_at_ms: now.saturating_add(self.config.token_ttl_ms),
        };
        let mut st = self.state.lock();
        st.purge_expired(now);
        st.tokens.insert(token.token, token.clone());
        Ok(token)
    }

    /// Resolves a token to its user, or `None` if unknown or expired.
    pub fn introspect(&self, token: &[u8]) -> Option<SessionToken> {
        let now = self.now_ms();
        let key: [u8; 32] = token.try_into().ok()?;
        self.state
            .lock()
            .tokens
            .get(&key)
            .filter(|t| t.expires_at_ms > now)
            .cloned()
    }

    // ---- credential store ----

    pub fn credential(&self, credential_id: &CredentialId) -> Option<Credential> {
        self.state.lock().credentials.get(credential_id).cloned()
    }

    pub fn credentials_for_user(&self, user_id: &UserId) -> Result<Vec<Credential>, RpError> {
        let st = self.state.lock();
        if st.users.get(user_id).is_none() {
            return Err(RpError::NoSuchUser(user_id.clone()));
        }
        Ok(st
            .credentials
            .values()
            .filter(|c| &c.user_id == user_id)
            .cloned()
            .collect())
    }

    pub fn has_active_kind(&self, user_id: &UserId, kind: DeviceKind) -> bool {
        self.state.lock().credentials.values().any(|c| {
            &c.user_id == user_id && c.kind == kind && c.state == CredentialState::Active && c.rp_id == self.config.rp_id
        })
    }

    pub fn revoke_credential(&self, credential_id: &CredentialId) -> Result<Credential, RpError> {
        let mut st = self.state.lock();
        let cred = st
            .credentials
            .get_mut(credential_id)
            .ok_or_else(|| RpError::NoSuchCredential(credential_id.clone()))?;
        if cred.state.is_terminal() {
            return Err(RpError::AlreadyTerminal(credential_id.clone(), cred.state));
        }
        cred.state = CredentialState::Revoked;
        Ok(cred.clone())
    }

    /// Marks every credential on `device_id` as wiped and queues a wipe
    /// directive for the device's next check-in.
    pub fn wipe_device(&self, device_id: &DeviceId) -> Result<usize, RpError> {
        let mut st = self.state.lock();
        let mut known = false;
        let mut marked = 0;
        for cred in st.credentials.values_mut().filter(|c| &c.device_id == device_id) {
            known = true;
            if cred.state == CredentialState::Active {
                cred.state = CredentialState::Wiped;
                marked += 1;
            }
        }
        if !known && !st.directives.contains_key(device_id) {
            return Err(RpError::NoSuchDevice(device_id.clone()));
        }
        st.directives.entry(device_id.clone()).or_default().push(DeviceDirective::Wipe);
        Ok(marked)
    }

    /// Makes a device id known with no credentials, so it can be targeted by
    /// admin actions before (or without) registering.
    pub fn announce_device(&self, device_id: &DeviceId) {
        self.state.lock().directives.entry(device_id.clone()).or_default();
    }

    /// Drains directives queued for a device.
    pub fn device_checkin(&self, device_id: &DeviceId) -> Vec<DeviceDirective> {
        self.state
            .lock()
            .directives
            .get_mut(device_id)
            .map(std::mem::take)
            .unwrap_or_default()
    }

    /// Inserts a credential record as-is, e.g. when mirroring records from
    /// another server.
    pub fn import_credential(&self, credential: Credential) {
        self.state
            .lock()
            .credentials
            .insert(credential.credential_id.clone(), credential);
    }

    pub fn import_user(&self, user: UserIdentity) {
        self.state.lock().users.insert(user);
    }

    // ---- persistence ----

    /// Users first, then credentials, each in id order.
    pub fn records(&self) -> Vec<StoreRecord> {
        let st = self.state.lock();
        st.users
            .iter()
            .cloned()
            .map(StoreRecord::User)
            .chain(st.credentials.values().cloned().map(StoreRecord::Credential))
            .collect()
    }

    pub fn save_to(&self, path: &Path) -> Result<(), RpError> {
        store::write_records(path, &self.records())
    }

    /// Replaces users and credentials with what `path` holds. Later records
    /// for the same id override earlier ones, so appended updates apply.
    pub fn load_from(&self, path: &Path) -> Result<usize, RpError> {
        let records = store::read_records(path)?;
        let n = records.len();
        let mut st = self.state.lock();
        st.users = IdentityRegistry::default();
        st.credentials.clear();
        for r in records {
            match r {
                StoreRecord::User(u) => st.users.insert(u),
                StoreRecord::Credential(c) => {
                    st.credentials.insert(c.credential_id.clone(), c);
                }
            }
        }
        Ok(n)
    }
}
