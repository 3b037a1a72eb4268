//! Triple-layer login orchestration.
//!
//! A service provider asks for a login; the request lands in the user's
//! approval feed; the user then proves, strictly in this order:
//!
//! 1. possession of the enrolled smartphone (device attestation),
//! 2. possession of the enrolled security key, after confirming the origin
//!    device shown in the approval UI,
//! 3. their face, gated by presentation attack detection.
//!
//! ```text
//! Pending ─► DeviceAttested ─► KeyVerified ─► FaceVerified ─► Complete
//!    │             │                │
//!    └─────────────┴────────────────┴─► Denied | Expired
//! ```
//!
//! Each session has its own lock, so transitions are compare-and-swap on the
//! session state and racing `advance` calls produce one winner.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authenticator::{AssertionResponse, DeviceKind};
use crate::clock::SharedClock;
use crate::crypto::Nonce;
use crate::face::{FaceError, FaceRegistry, PadVerdict};
use crate::ids::{CredentialId, SessionId, UserId};
use crate::rp::{CredentialState, RpServer, SessionToken, VerificationFailure};

pub const DEFAULT_SESSION_TTL_MS: u64 = 300_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Pending,
    DeviceAttested,
    KeyVerified,
    FaceVerified,
    Complete,
    Denied,
    Expired,
}

impl SessionState {
    pub fn is_terminal(self) -> bool {
        matches!(self, SessionState::Complete | SessionState::Denied | SessionState::Expired)
    }

    /// The step that moves this state forward, if any.
    pub fn next_step(self) -> Option<Step> {
        match self {
            SessionState::Pending => Some(Step::DeviceAttestation),
            SessionState::DeviceAttested => Some(Step::SecurityKey),
            SessionState::KeyVerified => Some(Step::Face),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    DeviceAttestation,
    SecurityKey,
    Face,
}

impl Step {
    pub const ORDER: [Step; 3] = [Step::DeviceAttestation, Step::SecurityKey, Step::Face];
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Step::DeviceAttestation => "device_attestation",
            Step::SecurityKey => "security_key",
            Step::Face => "face",
        })
    }
}

/// An enrollment a user needs before a login can start.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Smartphone,
    SecurityKey,
    Face,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum StepEvidence {
    DeviceAttestation {
        assertion: AssertionResponse,
        challenge_nonce: Nonce,
    },
    SecurityKey {
        assertion: AssertionResponse,
        challenge_nonce: Nonce,
        /// The user acknowledged the origin device shown in the approval UI.
        device_confirmed: bool,
    },
    Face {
        probe: Vec<f64>,
        pad_features: Vec<f64>,
    },
}

impl StepEvidence {
    pub fn step(&self) -> Step {
        match self {
            StepEvidence::DeviceAttestation { .. } => Step::DeviceAttestation,
            StepEvidence::SecurityKey { .. } => Step::SecurityKey,
            StepEvidence::Face { .. } => Step::Face,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvidenceRecord {
    Assertion { credential_id: CredentialId, counter: u32 },
    Face { confidence: f64, spoof_score: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: Step,
    pub completed_at_ms: u64,
    pub evidence: EvidenceRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuthSession {
    pub session_id: SessionId,
    pub user_id: UserId,
    pub service_provider: String,
    pub origin_device_descriptor: String,
    pub state: SessionState,
    pub step_evidence: Vec<StepRecord>,
    pub created_at_ms: u64,
    pub ttl_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub token: Option<SessionToken>,
}

impl AuthSession {
    pub fn has_all_layers(&self) -> bool {
        Step::ORDER
            .iter()
            .all(|s| self.step_evidence.iter().any(|r| r.step == *s))
    }

    pub fn expires_at_ms(&self) -> u64 {
        self.created_at_ms.saturating_add(self.ttl_ms)
    }

    pub fn is_expired(&self, now_ms: u64) -> bool {
        now_ms >= self.expires_at_ms()
    }
}

/// What the approver's device sees for one login request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub session_id: SessionId,
    pub service_provider: String,
    pub origin_device_descriptor: String,
    pub requested_at_ms: u64,
    pub state: SessionState,
    pub next_step: Option<Step>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StepFailure {
    Verification { failure: VerificationFailure },
    WrongCredentialKind { expected: DeviceKind, found: DeviceKind },
    CredentialNotOwned,
    DeviceNotConfirmed,
    FaceRejected { pad: PadVerdict, confidence: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub session: AuthSession,
    pub failure: Option<StepFailure>,
}

impl StepOutcome {
    pub fn advanced(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("no such user {0}")]
    NoSuchUser(UserId),
    #[error("no such session {0}")]
    NoSuchSession(SessionId),
    #[error("missing enrollment: {0:?}")]
    Prerequisite(Layer),
    #[error("step {got} is out of order (expected {})", expected.map_or("none".to_string(), |s| s.to_string()))]
    OutOfOrder { expected: Option<Step>, got: Step },
    #[error("evidence is for {evidence}, not {step}")]
    EvidenceMismatch { step: Step, evidence: Step },
    #[error("session expired")]
    SessionExpired,
    #[error("session already {0:?}")]
    SessionTerminal(SessionState),
    #[error(transparent)]
    Face(#[from] FaceError),
}

#[derive(Debug)]
pub struct Orchestrator {
    rp: Arc<RpServer>,
    faces: Arc<FaceRegistry>,
    clock: SharedClock,
    ttl_ms: u64,
    sessions: Mutex<HashMap<SessionId, SessionSlot>>,
    next_seq: AtomicU64,
}

/// Insertion sequence breaks creation-time ties when ordering the feed.
#[derive(Debug, Clone)]
struct SessionSlot {
    seq: u64,
    session: Arc<Mutex<AuthSession>>,
}

impl Orchestrator {
    pub fn new(rp: Arc<RpServer>, faces: Arc<FaceRegistry>) -> Self {
        let clock = rp.clock().clone();
        Self {
            rp,
            faces,
            clock,
            ttl_ms: DEFAULT_SESSION_TTL_MS,
            sessions: Mutex::new(HashMap::new()),
            next_seq: AtomicU64::new(0),
        }
    }

    pub fn with_ttl(mut self, ttl_ms: u64) -> Self {
        self.ttl_ms = ttl_ms;
        self
    }

    pub fn rp(&self) -> &Arc<RpServer> {
        &self.rp
    }

    pub fn faces(&self) -> &Arc<FaceRegistry> {
        &self.faces
    }

    fn handle(&self, session_id: &SessionId) -> Result<Arc<Mutex<AuthSession>>, OrchestratorError> {
        self.sessions
            .lock()
            .get(session_id)
            .map(|slot| slot.session.clone())
            .ok_or_else(|| OrchestratorError::NoSuchSession(session_id.clone()))
    }

    /// Marks the session expired if its time is up. Returns whether it is.
    fn expire_if_due(session: &mut AuthSession, now_ms: u64) -> bool {
        if session.is_expired(now_ms) {
            if !session.state.is_terminal() {
                session.state = SessionState::Expired;
            }
            true
        } else {
            false
        }
    }

    pub fn request_login(
        &self,
        user_id: &UserId,
        service_provider: &str,
        origin_device_descriptor: &str,
    ) -> Result<AuthSession, OrchestratorError> {
        if self.rp.user(user_id).is_none() {
            return Err(OrchestratorError::NoSuchUser(user_id.clone()));
        }
        if !self.rp.has_active_kind(user_id, DeviceKind::Smartphone) {
            return Err(OrchestratorError::Prerequisite(Layer::Smartphone));
        }
        if !self.rp.has_active_kind(user_id, DeviceKind::SecurityKey) {
            return Err(OrchestratorError::Prerequisite(Layer::SecurityKey));
        }
        if !self.faces.has_template(user_id) {
            return Err(OrchestratorError::Prerequisite(Layer::Face));
        }
        let session = AuthSession {
            session_id: SessionId::new(format!("sess-{}", self.rp.entropy().hex_id(12))),
            user_id: user_id.clone(),
            service_provider: service_provider.to_owned(),
            origin_device_descriptor: origin_device_descriptor.to_owned(),
            state: SessionState::Pending,
            step_evidence: Vec::new(),
            created_at_ms: self.clock.now_ms(),
            ttl_ms: self.ttl_ms,
            token: None,
        };
        let slot = SessionSlot {
            seq: self.next_seq.fetch_add(1, Ordering::SeqCst),
            session: Arc::new(Mutex::new(session.clone())),
        };
        self.sessions.lock().insert(session.session_id.clone(), slot);
        Ok(session)
    }

    pub fn session(&self, session_id: &SessionId) -> Result<AuthSession, OrchestratorError> {
        let handle = self.handle(session_id)?;
        let mut s = handle.lock();
        Self::expire_if_due(&mut s, self.clock.now_ms());
        Ok(s.clone())
    }

    pub fn advance(
        &self,
        session_id: &SessionId,
        step: Step,
        evidence: StepEvidence,
    ) -> Result<StepOutcome, OrchestratorError> {
        let handle = self.handle(session_id)?;
        let mut session = handle.lock();
        let now = self.clock.now_ms();

        if Self::expire_if_due(&mut session, now) {
            return Err(OrchestratorError::SessionExpired);
        }
        if session.state.is_terminal() {
            return Err(OrchestratorError::SessionTerminal(session.state));
        }
        let expected = session.state.next_step();
        if expected != Some(step) {
            return Err(OrchestratorError::OutOfOrder { expected, got: step });
        }
        if evidence.step() != step {
            return Err(OrchestratorError::EvidenceMismatch {
                step,
                evidence: evidence.step(),
            });
        }

        let record = match evidence {
            StepEvidence::DeviceAttestation {
                assertion,
                challenge_nonce,
            } => self.check_assertion(&session, DeviceKind::Smartphone, &assertion, &challenge_nonce),
            StepEvidence::SecurityKey {
                assertion,
                challenge_nonce,
                device_confirmed,
            } => {
                if !device_confirmed {
                    Err(StepFailure::DeviceNotConfirmed)
                } else {
                    self.check_assertion(&session, DeviceKind::SecurityKey, &assertion, &challenge_nonce)
                }
            }
            StepEvidence::Face { probe, pad_features } => {
                let decision = self.faces.verify_face(&session.user_id, &probe, &pad_features)?;
                if decision.accepted {
                    Ok(EvidenceRecord::Face {
                        confidence: decision.confidence,
                        spoof_score: decision.pad.spoof_score,
                    })
                } else {
                    Err(StepFailure::FaceRejected {
                        pad: decision.pad,
                        confidence: decision.confidence,
                    })
                }
            }
        };

        let evidence = match record {
            Ok(r) => r,
            Err(failure) => {
                return Ok(StepOutcome {
                    session: session.clone(),
                    failure: Some(failure),
                })
            }
        };
        session.step_evidence.push(StepRecord {
            step,
            completed_at_ms: now,
            evidence,
        });
        session.state = match step {
            Step::DeviceAttestation => SessionState::DeviceAttested,
            Step::SecurityKey => SessionState::KeyVerified,
            Step::Face => SessionState::FaceVerified,
        };
        if session.state == SessionState::FaceVerified {
            session.state = SessionState::Complete;
            // A complete session always carries all three records, so the
            // token is always issuable here.
            session.token = self.rp.issue_session(&session.user_id.clone(), &session).ok();
        }
        Ok(StepOutcome {
            session: session.clone(),
            failure: None,
        })
    }

    fn check_assertion(
        &self,
        session: &AuthSession,
        expected_kind: DeviceKind,
        assertion: &AssertionResponse,
        challenge_nonce: &Nonce,
    ) -> Result<EvidenceRecord, StepFailure> {
        // Ownership and kind are checked before the ceremony so a mismatched
        // credential cannot burn the user's challenge.
        if let Some(cred) = self.rp.credential(&assertion.credential_id) {
            if cred.state == CredentialState::Active {
                if cred.user_id != session.user_id {
                    return Err(StepFailure::CredentialNotOwned);
                }
                if cred.kind != expected_kind {
                    return Err(StepFailure::WrongCredentialKind {
                        expected: expected_kind,
                        found: cred.kind,
                    });
                }
            }
        }
        let result = self.rp.finish_authentication(assertion, challenge_nonce);
        match result.failure {
            None => Ok(EvidenceRecord::Assertion {
                credential_id: assertion.credential_id.clone(),
                counter: assertion.signed_payload.counter,
            }),
            Some(failure) => Err(StepFailure::Verification { failure }),
        }
    }

    pub fn deny(&self, session_id: &SessionId) -> Result<AuthSession, OrchestratorError> {
        let handle = self.handle(session_id)?;
        let mut session = handle.lock();
        if Self::expire_if_due(&mut session, self.clock.now_ms()) {
            return Err(OrchestratorError::SessionExpired);
        }
        if session.state.is_terminal() {
            return Err(OrchestratorError::SessionTerminal(session.state));
        }
        session.state = SessionState::Denied;
        Ok(session.clone())
    }

    /// Live (non-terminal, unexpired) requests for `user_id`, newest first.
    pub fn approval_feed(&self, user_id: &UserId) -> Result<Vec<PendingRequest>, OrchestratorError> {
        if self.rp.user(user_id).is_none() {
            return Err(OrchestratorError::NoSuchUser(user_id.clone()));
        }
        let now = self.clock.now_ms();
        let handles: Vec<_> = self.sessions.lock().values().cloned().collect();
        let mut feed: Vec<(u64, PendingRequest)> = handles
            .iter()
            .filter_map(|slot| {
                let mut s = slot.session.lock();
                if &s.user_id != user_id {
                    return None;
                }
                Self::expire_if_due(&mut s, now);
                if s.state.is_terminal() {
                    return None;
                }
                let request = PendingRequest {
                    session_id: s.session_id.clone(),
                    service_provider: s.service_provider.clone(),
                    origin_device_descriptor: s.origin_device_descriptor.clone(),
                    requested_at_ms: s.created_at_ms,
                    state: s.state,
                    next_step: s.state.next_step(),
                };
                Some((slot.seq, request))
            })
            .collect();
        feed.sort_by(|(sa, a), (sb, b)| b.requested_at_ms.cmp(&a.requested_at_ms).then_with(|| sb.cmp(sa)));
        Ok(feed.into_iter().map(|(_, r)| r).collect())
    }
}

#[cfg(test)]
mod tests;
