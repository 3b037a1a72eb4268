//! Passwordless triple-layer authentication.
//!
//! Software authenticators ([`authenticator`]) register and assert against a
//! relying party ([`rp`]); logins then pass three ordered layers in the
//! [`orchestrator`]: the enrolled smartphone, the enrolled security key, and
//! a presentation-attack-gated face match ([`face`]). [`admin`] covers
//! revocation and remote wipe, [`bench_harness`] the timing comparison, and
//! [`api`] the JSON wire surface.

pub mod admin;
pub mod api;
pub mod authenticator;
pub mod bench_harness;
pub mod clock;
pub mod crypto;
pub mod encoding;
pub mod face;
pub mod ids;
pub mod orchestrator;
pub mod rp;
pub mod sim;

pub use admin::{AdminAction, AdminActionKind, AdminError, KeyAdmin};
pub use authenticator::{
    AssertionResponse, AttestationResponse, AuthenticatorDevice, AuthenticatorError, DeviceDirective, DeviceKind,
    SealedDevice,
};
pub use clock::{Clock, ManualClock, SharedClock, SystemClock};
pub use crypto::{Challenge, CryptoError, Entropy, Flags, KeyPair, Nonce, PublicKey, Purpose, SignedPayload};
pub use face::{FaceDecision, FaceError, FaceRegistry, FaceTemplate, PadClass, PadClassifier, PadVerdict, ReferencePad};
pub use ids::{ActionId, CredentialId, DeviceId, KeyId, SessionId, UserId};
pub use orchestrator::{
    AuthSession, Layer, Orchestrator, OrchestratorError, PendingRequest, SessionState, Step, StepEvidence, StepFailure,
    StepOutcome,
};
pub use rp::{
    Credential, CredentialState, RpConfig, RpError, RpServer, SessionToken, UserIdentity, VerificationFailure,
    VerificationResult,
};
