use std::sync::Arc;

use super::*;
use crate::authenticator::AuthenticatorDevice;
use crate::clock::ManualClock;
use crate::crypto::Entropy;
use crate::face::ReferencePad;
use crate::rp::RpConfig;
use crate::sim::{at_cosine, register_device, EnrolledUser, SPOOF_PAD};

const RP: &str = "sso.example.org";

struct World {
    orch: Orchestrator,
    clock: Arc<ManualClock>,
    entropy: Entropy,
}

impl World {
    fn new() -> Self {
        let clock = ManualClock::shared(1_000_000);
        let rp = Arc::new(RpServer::with_parts(RpConfig::new(RP), clock.clone(), Entropy::os()));
        let faces = Arc::new(FaceRegistry::new(Arc::new(ReferencePad), clock.clone()));
        Self {
            orch: Orchestrator::new(rp, faces),
            clock,
            entropy: Entropy::seeded(11),
        }
    }

    fn rp(&self) -> &RpServer {
        self.orch.rp()
    }

    fn user(&self, email: &str) -> EnrolledUser {
        EnrolledUser::enroll(self.rp(), self.orch.faces(), email, &self.entropy).unwrap()
    }

    fn login(&self, u: &EnrolledUser) -> SessionId {
        self.orch
            .request_login(&u.user_id, "metaverse.example", "Firefox on Linux")
            .unwrap()
            .session_id
    }
}

fn state(w: &World, id: &SessionId) -> SessionState {
    w.orch.session(id).unwrap().state
}

#[test]
fn first_transition_and_skip() {
    let w = World::new();
    let mut u = w.user("a@x.org");
    let id = w.login(&u);
    assert_eq!(state(&w, &id), SessionState::Pending);

    let key = u.key_evidence(w.rp()).unwrap();
    let err = w.orch.advance(&id, Step::SecurityKey, key).unwrap_err();
    assert!(matches!(
        err,
        OrchestratorError::OutOfOrder {
            expected: Some(Step::DeviceAttestation),
            got: Step::SecurityKey
        }
    ));
    assert_eq!(state(&w, &id), SessionState::Pending);

    let out = w
        .orch
        .advance(&id, Step::DeviceAttestation, u.phone_evidence(w.rp()).unwrap())
        .unwrap();
    assert!(out.advanced());
    assert_eq!(out.session.state, SessionState::DeviceAttested);
    assert_eq!(out.session.step_evidence.len(), 1);
}

#[test]
fn evidence_must_match_step() {
    let w = World::new();
    let u = w.user("a@x.org");
    let id = w.login(&u);
    let err = w.orch.advance(&id, Step::DeviceAttestation, u.face_evidence()).unwrap_err();
    assert!(matches!(err, OrchestratorError::EvidenceMismatch { .. }));
    assert_eq!(state(&w, &id), SessionState::Pending);
}

#[test]
fn honest_run_completes_with_token() {
    let w = World::new();
    let mut u = w.user("a@x.org");
    let id = w.login(&u);
    w.orch
        .advance(&id, Step::DeviceAttestation, u.phone_evidence(w.rp()).unwrap())
        .unwrap();
    w.orch.advance(&id, Step::SecurityKey, u.key_evidence(w.rp()).unwrap()).unwrap();
    let out = w.orch.advance(&id, Step::Face, u.face_evidence()).unwrap();
    assert!(out.advanced());
    let s = out.session;
    assert_eq!(s.state, SessionState::Complete);
    assert!(s.has_all_layers());
    let steps: Vec<Step> = s.step_evidence.iter().map(|r| r.step).collect();
    assert_eq!(steps, Step::ORDER);

    let token = s.token.clone().unwrap();
    assert_eq!(w.rp().introspect(&token.token).unwrap().user_id, u.user_id);
    assert!(w.rp().issue_session(&u.user_id, &s).is_ok());
    assert!(w.orch.approval_feed(&u.user_id).unwrap().is_empty());
    assert!(matches!(
        w.orch.advance(&id, Step::Face, u.face_evidence()),
        Err(OrchestratorError::SessionTerminal(SessionState::Complete))
    ));
}

#[test]
fn wrong_kind_does_not_burn_challenge() {
    let w = World::new();
    let mut u = w.user("a@x.org");
    let id = w.login(&u);
    let key = u.key_evidence(w.rp()).unwrap();
    let StepEvidence::SecurityKey {
        assertion,
        challenge_nonce,
        ..
    } = key.clone()
    else {
        unreachable!()
    };
    let out = w
        .orch
        .advance(
            &id,
            Step::DeviceAttestation,
            StepEvidence::DeviceAttestation {
                assertion,
                challenge_nonce,
            },
        )
        .unwrap();
    assert_eq!(
        out.failure,
        Some(StepFailure::WrongCredentialKind {
            expected: DeviceKind::Smartphone,
            found: DeviceKind::SecurityKey
        })
    );
    assert_eq!(out.session.state, SessionState::Pending);

    w.orch
        .advance(&id, Step::DeviceAttestation, u.phone_evidence(w.rp()).unwrap())
        .unwrap();
    assert!(w.orch.advance(&id, Step::SecurityKey, key).unwrap().advanced());
}

#[test]
fn foreign_credential_and_unconfirmed_device() {
    let w = World::new();
    let mut alice = w.user("alice@x.org");
    let mut bob = w.user("bob@x.org");
    let id = w.login(&alice);

    let out = w
        .orch
        .advance(&id, Step::DeviceAttestation, bob.phone_evidence(w.rp()).unwrap())
        .unwrap();
    assert_eq!(out.failure, Some(StepFailure::CredentialNotOwned));

    w.orch
        .advance(&id, Step::DeviceAttestation, alice.phone_evidence(w.rp()).unwrap())
        .unwrap();
    let StepEvidence::SecurityKey {
        assertion,
        challenge_nonce,
        ..
    } = alice.key_evidence(w.rp()).unwrap()
    else {
        unreachable!()
    };
    let unconfirmed = StepEvidence::SecurityKey {
        assertion,
        challenge_nonce,
        device_confirmed: false,
    };
    let out = w.orch.advance(&id, Step::SecurityKey, unconfirmed).unwrap();
    assert_eq!(out.failure, Some(StepFailure::DeviceNotConfirmed));
    assert_eq!(out.session.state, SessionState::DeviceAttested);
}

#[test]
fn face_step_rejections_keep_state() {
    let w = World::new();
    let mut u = w.user("a@x.org");
    let id = w.login(&u);
    w.orch
        .advance(&id, Step::DeviceAttestation, u.phone_evidence(w.rp()).unwrap())
        .unwrap();
    w.orch.advance(&id, Step::SecurityKey, u.key_evidence(w.rp()).unwrap()).unwrap();

    let spoof = StepEvidence::Face {
        probe: u.face.clone(),
        pad_features: SPOOF_PAD.to_vec(),
    };
    let out = w.orch.advance(&id, Step::Face, spoof).unwrap();
    assert!(matches!(out.failure, Some(StepFailure::FaceRejected { pad, confidence })
        if pad.class == crate::face::PadClass::Spoof && confidence == 0.0));
    assert_eq!(out.session.state, SessionState::KeyVerified);

    // cos 0.5 is confidence 0.75, under the bar
    let stranger = StepEvidence::Face {
        probe: at_cosine(&u.face, 0.5, &w.entropy),
        pad_features: crate::sim::LIVE_PAD.to_vec(),
    };
    assert!(!w.orch.advance(&id, Step::Face, stranger).unwrap().advanced());
    let bad_shape = StepEvidence::Face {
        probe: vec![1.0; 3],
        pad_features: crate::sim::LIVE_PAD.to_vec(),
    };
    assert!(matches!(
        w.orch.advance(&id, Step::Face, bad_shape),
        Err(OrchestratorError::Face(_))
    ));
    assert_eq!(state(&w, &id), SessionState::KeyVerified);
    assert!(w.orch.advance(&id, Step::Face, u.face_evidence()).unwrap().advanced());
}

#[test]
fn deny_is_terminal() {
    let w = World::new();
    let mut u = w.user("a@x.org");

    let id = w.login(&u);
    assert_eq!(w.orch.deny(&id).unwrap().state, SessionState::Denied);
    assert!(matches!(
        w.orch.advance(&id, Step::DeviceAttestation, u.phone_evidence(w.rp()).unwrap()),
        Err(OrchestratorError::SessionTerminal(SessionState::Denied))
    ));
    assert!(matches!(w.orch.deny(&id), Err(OrchestratorError::SessionTerminal(_))));

    let id = w.login(&u);
    w.orch
        .advance(&id, Step::DeviceAttestation, u.phone_evidence(w.rp()).unwrap())
        .unwrap();
    assert_eq!(w.orch.deny(&id).unwrap().state, SessionState::Denied);
    assert!(w.orch.approval_feed(&u.user_id).unwrap().is_empty());
    assert!(matches!(
        w.orch.deny(&SessionId::from("sess-none")),
        Err(OrchestratorError::NoSuchSession(_))
    ));
}

#[test]
fn prerequisites_are_named() {
    let w = World::new();
    let rp = w.rp();
    assert!(matches!(
        w.orch.request_login(&UserId::from("ghost"), "sp", "d"),
        Err(OrchestratorError::NoSuchUser(_))
    ));
    let user = rp.register_user("p@x.org", "P").unwrap();
    let uid = user.user_id().clone();
    let need = |layer| matches!(w.orch.request_login(&uid, "sp", "d"), Err(OrchestratorError::Prerequisite(l)) if l == layer);
    assert!(need(Layer::Smartphone));
    let mut key = AuthenticatorDevice::with_clock(DeviceKind::SecurityKey, rp.clock().clone());
    register_device(rp, &mut key, &uid).unwrap();
    assert!(need(Layer::Smartphone));
    let mut phone = AuthenticatorDevice::with_clock(DeviceKind::Smartphone, rp.clock().clone());
    let phone_cred = register_device(rp, &mut phone, &uid).unwrap();
    assert!(need(Layer::Face));
    w.orch.faces().enroll(&uid, &crate::sim::random_unit(&w.entropy)).unwrap();
    assert!(w.orch.request_login(&uid, "sp", "d").is_ok());
    rp.revoke_credential(&phone_cred.credential_id).unwrap();
    assert!(need(Layer::Smartphone));
}

#[test]
fn missing_security_key_is_named() {
    let w = World::new();
    let rp = w.rp();
    let user = rp.register_user("k@x.org", "K").unwrap();
    let mut phone = AuthenticatorDevice::with_clock(DeviceKind::Smartphone, rp.clock().clone());
    register_device(rp, &mut phone, user.user_id()).unwrap();
    assert!(matches!(
        w.orch.request_login(user.user_id(), "sp", "d"),
        Err(OrchestratorError::Prerequisite(Layer::SecurityKey))
    ));
}

#[test]
fn feed_is_per_user_and_newest_first() {
    let w = World::new();
    let alice = w.user("alice@x.org");
    let bob = w.user("bob@x.org");
    let first = w.orch.request_login(&alice.user_id, "first.example", "phone").unwrap();
    let second = w.orch.request_login(&alice.user_id, "second.example", "tablet").unwrap();
    w.clock.advance(5);
    let third = w.orch.request_login(&alice.user_id, "third.example", "laptop").unwrap();
    let theirs = w.orch.request_login(&bob.user_id, "bob.example", "pc").unwrap();

    let feed = w.orch.approval_feed(&alice.user_id).unwrap();
    let ids: Vec<&SessionId> = feed.iter().map(|p| &p.session_id).collect();
    assert_eq!(ids, [&third.session_id, &second.session_id, &first.session_id]);
    assert_eq!(feed[0].service_provider, "third.example");
    assert_eq!(feed[0].origin_device_descriptor, "laptop");
    assert_eq!(feed[0].next_step, Some(Step::DeviceAttestation));
    assert!(!ids.contains(&&theirs.session_id));

    let bobs = w.orch.approval_feed(&bob.user_id).unwrap();
    assert_eq!(bobs.len(), 1);
    assert!(matches!(
        w.orch.approval_feed(&UserId::from("ghost")),
        Err(OrchestratorError::NoSuchUser(_))
    ));
}

#[test]
fn expiry_beats_every_state() {
    let w = World::new();
    let mut u = w.user("a@x.org");

    let pending = w.login(&u);
    let attested = w.login(&u);
    w.orch
        .advance(&attested, Step::DeviceAttestation, u.phone_evidence(w.rp()).unwrap())
        .unwrap();
    let complete = w.login(&u);
    w.orch
        .advance(&complete, Step::DeviceAttestation, u.phone_evidence(w.rp()).unwrap())
        .unwrap();
    w.orch
        .advance(&complete, Step::SecurityKey, u.key_evidence(w.rp()).unwrap())
        .unwrap();
    w.orch.advance(&complete, Step::Face, u.face_evidence()).unwrap();
    let denied = w.login(&u);
    w.orch.deny(&denied).unwrap();

    w.clock.advance(DEFAULT_SESSION_TTL_MS - 1);
    assert_eq!(w.orch.approval_feed(&u.user_id).unwrap().len(), 2);
    w.clock.advance(1);
    for id in [&pending, &attested, &complete, &denied] {
        let evidence = u.face_evidence();
        assert!(matches!(
            w.orch.advance(id, Step::DeviceAttestation, evidence),
            Err(OrchestratorError::SessionExpired)
        ));
    }
    assert_eq!(state(&w, &pending), SessionState::Expired);
    assert_eq!(state(&w, &attested), SessionState::Expired);
    assert_eq!(state(&w, &complete), SessionState::Complete);
    assert!(w.orch.approval_feed(&u.user_id).unwrap().is_empty());
    assert!(matches!(w.orch.deny(&pending), Err(OrchestratorError::SessionExpired)));
}

#[test]
fn evidence_cannot_be_reused_across_sessions() {
    let w = World::new();
    let mut u = w.user("a@x.org");
    let a = w.login(&u);
    let b = w.login(&u);
    let evidence = u.phone_evidence(w.rp()).unwrap();
    assert!(w
        .orch
        .advance(&a, Step::DeviceAttestation, evidence.clone())
        .unwrap()
        .advanced());
    let out = w.orch.advance(&b, Step::DeviceAttestation, evidence).unwrap();
    assert_eq!(
        out.failure,
        Some(StepFailure::Verification {
            failure: VerificationFailure::ChallengeReused
        })
    );
    assert_eq!(out.session.state, SessionState::Pending);
}

#[test]
fn racing_advances_have_one_winner() {
    let w = Arc::new(World::new());
    let mut u = w.user("a@x.org");
    let id = w.login(&u);
    let evidence = u.phone_evidence(w.rp()).unwrap();
    let handles: Vec<_> = (0..16)
        .map(|_| {
            let (w, id, evidence) = (w.clone(), id.clone(), evidence.clone());
            std::thread::spawn(move || w.orch.advance(&id, Step::DeviceAttestation, evidence))
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let winners = results.iter().filter(|r| matches!(r, Ok(o) if o.advanced())).count();
    assert_eq!(winners, 1);
    assert!(results
        .iter()
        .filter(|r| !matches!(r, Ok(o) if o.advanced()))
        .all(|r| matches!(r, Err(OrchestratorError::OutOfOrder { .. }))));
}

#[test]
fn wire_shapes() {
    let evidence = StepEvidence::Face {
        probe: vec![0.5],
        pad_features: vec![0.1],
    };
    let json = serde_json::to_value(&evidence).unwrap();
    assert_eq!(json["step"], "face");
    let back: StepEvidence = serde_json::from_value(json).unwrap();
    assert_eq!(back, evidence);
    assert_eq!(serde_json::to_value(SessionState::DeviceAttested).unwrap(), "device_attested");
}
