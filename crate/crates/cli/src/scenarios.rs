//! Named end-to-end runs: one honest login and one run per attack, each
//! with the failure code it must produce.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use passgate_core::api::Service;
use passgate_core::sim::{random_unit, SPOOF_PAD};
use passgate_core::{
    AuthenticatorDevice, AuthenticatorError, Challenge, Credential, DeviceKind, Entropy, FaceRegistry, PadClass,
    RpConfig, RpServer, SessionState, Step, StepEvidence, StepFailure, UserId, VerificationResult,
};
use serde::Serialize;

use crate::client::{Client, ClientError};
use crate::transport::TransportError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    HonestLogin,
    Replay,
    PhishingRp,
    ClonedKey,
    SpoofFace,
    WipedKey,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::HonestLogin,
        Scenario::Replay,
        Scenario::PhishingRp,
        Scenario::ClonedKey,
        Scenario::SpoofFace,
        Scenario::WipedKey,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::HonestLogin => "honest-login",
            Scenario::Replay => "replay",
            Scenario::PhishingRp => "phishing-rp",
            Scenario::ClonedKey => "cloned-key",
            Scenario::SpoofFace => "spoof-face",
            Scenario::WipedKey => "wiped-key",
        }
    }

    pub fn expected(self) -> &'static str {
        match self {
            Scenario::HonestLogin => "complete with active session token",
            Scenario::Replay => "challenge_reused",
            Scenario::PhishingRp => "rp_mismatch",
            Scenario::ClonedKey => "counter_regression",
            Scenario::SpoofFace => "face rejected with pad spoof",
            Scenario::WipedKey => "credential_inactive",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase();
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name().replace('-', "") == key)
            .ok_or_else(|| {
                let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
                format!("unknown scenario {s:?}; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScenarioResult {
    pub name: String,
    pub steps: Vec<String>,
    pub expected: String,
    pub observed: String,
    pub pass: bool,
}

#[derive(Debug, thiserror::Error)]
enum StepError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("device: {0}")]
    Device(#[from] AuthenticatorError),
    #[error("{0}")]
    Other(String),
}

struct Run<'a> {
    client: &'a Client,
    entropy: &'a Entropy,
    steps: Vec<String>,
}

fn code<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(e) => format!("<{e}>"),
    }
}

fn verdict(r: &VerificationResult) -> String {
    match r.failure {
        None if r.ok => "ok".into(),
        None => "rejected".into(),
        Some(f) => code(&f),
    }
}

impl Run<'_> {
    fn note(&mut self, s: impl Into<String>) {
        self.steps.push(s.into());
    }

    fn new_user(&mut self, label: &str) -> Result<UserId, StepError> {
        let email = format!("{label}.{}@scenario.example", self.entropy.hex_id(4));
        let user = self.client.create_user(&email, label)?;
        self.note(format!("created user {}", user.user_id()));
        Ok(user.user_id().clone())
    }

    fn register(&mut self, device: &mut AuthenticatorDevice, user: &UserId) -> Result<Credential, StepError> {
        let challenge = self.client.begin_registration(user)?;
        let attestation = device.make_credential(&challenge, challenge.rp_id(), user)?;
        let cred = self.client.finish_registration(&attestation, challenge.nonce())?;
        self.note(format!("registered {} {} as {}", device.kind(), device.device_id(), cred.credential_id));
        Ok(cred)
    }

    /// An assertion over a fresh challenge, not yet submitted.
    fn sign(
        &mut self,
        device: &mut AuthenticatorDevice,
        user: &UserId,
        cred: &Credential,
    ) -> Result<(passgate_core::AssertionResponse, Challenge), StepError> {
        let challenge = self.client.begin_authentication(user)?;
        let assertion = device.get_assertion(&challenge, challenge.rp_id(), &cred.credential_id, true)?;
        Ok((assertion, challenge))
    }

    fn authenticate(
        &mut self,
        device: &mut AuthenticatorDevice,
        user: &UserId,
        cred: &Credential,
        label: &str,
    ) -> Result<String, StepError> {
        let (assertion, challenge) = self.sign(device, user, cred)?;
        let v = verdict(&self.client.finish_authentication(&assertion, challenge.nonce())?);
        self.note(format!("{label}: counter {} -> {v}", assertion.signed_payload.counter));
        Ok(v)
    }

    fn require_ok(&self, v: &str, what: &str) -> Result<(), StepError> {
        if v == "ok" {
            Ok(())
        } else {
            Err(StepError::Other(format!("{what} was rejected: {v}")))
        }
    }

    /// A user with a phone, a key and a face template, ready for login.
    fn full_enrollment(&mut self) -> Result<Enrolled, StepError> {
        let user = self.new_user("triple")?;
        let mut phone = AuthenticatorDevice::new(DeviceKind::Smartphone);
        let phone_cred = self.register(&mut phone, &user)?;
        let mut key = AuthenticatorDevice::new(DeviceKind::SecurityKey);
        let key_cred = self.register(&mut key, &user)?;
        let face = random_unit(self.entropy);
        self.client.enroll_face(&user, &face)?;
        self.note("enrolled face template");
        Ok(Enrolled {
            user,
            phone,
            phone_cred,
            key,
            key_cred,
            face,
        })
    }

    /// Requests a login and passes the two device layers.
    fn through_devices(&mut self, e: &mut Enrolled) -> Result<passgate_core::SessionId, StepError> {
        let session = self.client.request_login(&e.user, "portal.example", "laptop / firefox")?;
        let id = session.session_id;
        self.note(format!("login requested: session {id}"));
        let (assertion, challenge) = self.sign(&mut e.phone, &e.user, &e.phone_cred)?;
        let out = self.client.advance(
            &id,
            Step::DeviceAttestation,
            StepEvidence::DeviceAttestation {
                assertion,
                challenge_nonce: *challenge.nonce(),
            },
        )?;
        self.note(format!("device attestation -> {}", code(&out.session.state)));
        let (assertion, challenge) = self.sign(&mut e.key, &e.user, &e.key_cred)?;
        let out = self.client.advance(
            &id,
            Step::SecurityKey,
            StepEvidence::SecurityKey {
                assertion,
                challenge_nonce: *challenge.nonce(),
                device_confirmed: true,
            },
        )?;
        self.note(format!("security key -> {}", code(&out.session.state)));
        if out.session.state != SessionState::KeyVerified {
            return Err(StepError::Other(format!("device layers stopped at {:?}", out.failure)));
        }
        Ok(id)
    }

    fn honest_login(&mut self) -> Result<String, StepError> {
        let mut e = self.full_enrollment()?;
        let id = self.through_devices(&mut e)?;
        let out = self.client.advance(
            &id,
            Step::Face,
            StepEvidence::Face {
                probe: e.face.clone(),
                pad_features: passgate_core::sim::LIVE_PAD.to_vec(),
            },
        )?;
        self.note(format!("face -> {}", code(&out.session.state)));
        let session = self.client.session(&id)?;
        let Some(token) = session.token else {
            return Ok(format!("{} without token", code(&session.state)));
        };
        let active = self.client.introspect(&token.token)?.active;
        self.note(format!("token introspection active={active}"));
        Ok(if session.state == SessionState::Complete && active {
            Scenario::HonestLogin.expected().into()
        } else {
            format!("{} with token active={active}", code(&session.state))
        })
    }

    fn replay(&mut self) -> Result<String, StepError> {
        let user = self.new_user("replay")?;
        let mut key = AuthenticatorDevice::new(DeviceKind::SecurityKey);
        let cred = self.register(&mut key, &user)?;
        let (assertion, challenge) = self.sign(&mut key, &user, &cred)?;
        let first = verdict(&self.client.finish_authentication(&assertion, challenge.nonce())?);
        self.note(format!("genuine assertion -> {first}"));
        self.require_ok(&first, "genuine assertion")?;
        let second = verdict(&self.client.finish_authentication(&assertion, challenge.nonce())?);
        self.note(format!("captured assertion resubmitted -> {second}"));
        Ok(second)
    }

    fn phishing(&mut self) -> Result<String, StepError> {
        let real_rp = self.client.health()?;
        let user = self.new_user("phish")?;
        let mut key = AuthenticatorDevice::new(DeviceKind::SecurityKey);
        let cred = self.register(&mut key, &user)?;

        // A lookalike server that has copied the victim's public records.
        let lookalike = format!("{real_rp}.account-verify.example");
        let fake = RpServer::new(RpConfig::new(lookalike.clone()));
        fake.import_user(self.client.user(&user)?);
        fake.import_credential(cred.clone());
        self.note(format!("lookalike server {lookalike} imported the credential"));

        let challenge = fake
            .begin_authentication(&user, &real_rp)
            .map_err(|e| StepError::Other(e.to_string()))?;
        let assertion = key.get_assertion(&challenge, &real_rp, &cred.credential_id, true)?;
        let at_fake = verdict(&fake.finish_authentication(&assertion, challenge.nonce()));
        self.note(format!("assertion for {real_rp} verified at {lookalike} -> {at_fake}"));

        // The browser binds the request to the lookalike origin instead.
        let challenge = self.client.begin_authentication(&user)?;
        let at_device = match key.get_assertion(&challenge, &lookalike, &cred.credential_id, true) {
            Err(AuthenticatorError::RpMismatch { .. }) => "rp_mismatch".to_string(),
            Err(e) => return Err(e.into()),
            Ok(a) => verdict(&self.client.finish_authentication(&a, challenge.nonce())?),
        };
        self.note(format!("key asked to sign for {lookalike} -> {at_device}"));
        Ok(if at_fake == at_device {
            at_fake
        } else {
            format!("lookalike: {at_fake}, device: {at_device}")
        })
    }

    fn cloned_key(&mut self) -> Result<String, StepError> {
        let user = self.new_user("clone")?;
        let mut key = AuthenticatorDevice::new(DeviceKind::SecurityKey);
        let cred = self.register(&mut key, &user)?;
        let warmup = self.authenticate(&mut key, &user, &cred, "genuine key")?;
        self.require_ok(&warmup, "genuine key")?;
        let mut clone = key.fork();
        self.note("key state copied");
        let genuine = self.authenticate(&mut key, &user, &cred, "genuine key")?;
        self.require_ok(&genuine, "genuine key")?;
        self.authenticate(&mut clone, &user, &cred, "cloned key")
    }

    fn spoof_face(&mut self) -> Result<String, StepError> {
        let mut e = self.full_enrollment()?;
        let id = self.through_devices(&mut e)?;
        let out = self.client.advance(
            &id,
            Step::Face,
            StepEvidence::Face {
                probe: e.face.clone(),
                pad_features: SPOOF_PAD.to_vec(),
            },
        )?;
        let observed = match &out.failure {
            Some(StepFailure::FaceRejected { pad, .. }) => {
                self.note(format!(
                    "matching face replayed on a screen -> spoof score {:.2}, {}",
                    pad.spoof_score,
                    code(&pad.class)
                ));
                if pad.class == PadClass::Spoof {
                    Scenario::SpoofFace.expected().into()
                } else {
                    format!("face rejected with pad {}", code(&pad.class))
                }
            }
            Some(other) => format!("rejected: {}", code(other)),
            None => "accepted".into(),
        };
        let state = self.client.session(&id)?.state;
        self.note(format!("session left at {}", code(&state)));
        if state == SessionState::Complete {
            return Ok("session completed".into());
        }
        Ok(observed)
    }

    fn wiped_key(&mut self) -> Result<String, StepError> {
        let user = self.new_user("wipe")?;
        let mut phone = AuthenticatorDevice::new(DeviceKind::Smartphone);
        self.register(&mut phone, &user)?;
        let mut key = AuthenticatorDevice::new(DeviceKind::SecurityKey);
        let cred = self.register(&mut key, &user)?;
        let mut stolen = key.fork();
        self.note("key contents extracted");
        let (early, early_challenge) = self.sign(&mut stolen, &user, &cred)?;

        let wiped = self.client.admin_wipe(key.device_id())?;
        self.note(format!("admin wiped {} ({} credentials)", wiped.device_id, wiped.wiped));
        let directives = self.client.checkin(key.device_id())?;
        key.apply_directives(&directives);
        self.note(format!("device checked in, wiped={}", key.is_wiped()));
        if !matches!(self.sign(&mut key, &user, &cred), Err(StepError::Device(AuthenticatorError::DeviceWiped))) {
            return Ok("wiped device still signs".into());
        }

        let pre = verdict(&self.client.finish_authentication(&early, early_challenge.nonce())?);
        self.note(format!("assertion signed before the wipe -> {pre}"));
        let post = self.authenticate(&mut stolen, &user, &cred, "extracted copy after the wipe")?;
        Ok(if pre == post { pre } else { format!("before: {pre}, after: {post}") })
    }
}

struct Enrolled {
    user: UserId,
    phone: AuthenticatorDevice,
    phone_cred: Credential,
    key: AuthenticatorDevice,
    key_cred: Credential,
    face: Vec<f64>,
}

/// Runs one scenario. Only an unreachable server is an error; anything else
/// that goes wrong is a failed result.
pub fn run_scenario(client: &Client, scenario: Scenario, entropy: &Entropy) -> Result<ScenarioResult, TransportError> {
    let mut run = Run {
        client,
        entropy,
        steps: Vec::new(),
    };
    let observed = match scenario {
        Scenario::HonestLogin => run.honest_login(),
        Scenario::Replay => run.replay(),
        Scenario::PhishingRp => run.phishing(),
        Scenario::ClonedKey => run.cloned_key(),
        Scenario::SpoofFace => run.spoof_face(),
        Scenario::WipedKey => run.wiped_key(),
    };
    let observed = match observed {
        Ok(o) => o,
        Err(StepError::Client(ClientError::Transport(e))) => return Err(e),
        Err(e) => format!("error: {e}"),
    };
    let expected = scenario.expected().to_owned();
    Ok(ScenarioResult {
        name: scenario.name().into(),
        steps: run.steps,
        pass: observed == expected,
        expected,
        observed,
    })
}

/// An embedded server for running scenarios without a network.
pub fn embedded_service(rp_id: &str, admin_secret: &str, entropy: Entropy) -> Arc<Service> {
    let rp = RpServer::with_parts(RpConfig::new(rp_id), passgate_core::clock::system_clock(), entropy);
    Arc::new(Service::new(Arc::new(rp), Arc::new(FaceRegistry::default()), admin_secret))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse_loosely() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert_eq!("PhishingRp".parse::<Scenario>().unwrap(), Scenario::PhishingRp);
        assert_eq!("wiped_key".parse::<Scenario>().unwrap(), Scenario::WipedKey);
        assert!("sideways".parse::<Scenario>().is_err());
    }
}
