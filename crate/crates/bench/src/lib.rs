//! Fixtures shared by the criterion benches.

use std::sync::Arc;

use passgate_core::sim::{register_device, EnrolledUser};
use passgate_core::{AuthenticatorDevice, Credential, DeviceKind, Entropy, FaceRegistry, Orchestrator, RpConfig, RpServer, UserId};

pub const RP_ID: &str = "bench.example";

/// A server with one user holding one registered security key.
pub struct KeyFixture {
    pub rp: RpServer,
    pub device: AuthenticatorDevice,
    pub user: UserId,
    pub credential: Credential,
}

impl KeyFixture {
    pub fn new() -> Self {
        let rp = RpServer::new(RpConfig::new(RP_ID));
        let user = rp.register_user("bench@bench.example", "Bench").expect("fresh server").user_id().clone();
        let mut device = AuthenticatorDevice::new(DeviceKind::SecurityKey);
        let credential = register_device(&rp, &mut device, &user).expect("registration");
        Self {
            rp,
            device,
            user,
            credential,
        }
    }
}

impl Default for KeyFixture {
    fn default() -> Self {
        Self::new()
    }
}

/// An orchestrator with one fully enrolled user.
pub fn triple_fixture() -> (Orchestrator, EnrolledUser) {
    let rp = Arc::new(RpServer::new(RpConfig::new(RP_ID)));
    let faces = Arc::new(FaceRegistry::default());
    let user = EnrolledUser::enroll(&rp, &faces, "triple@bench.example", &Entropy::seeded(1)).expect("enrollment");
    (Orchestrator::new(rp, faces), user)
}
