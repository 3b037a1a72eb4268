//! Helpers for driving whole ceremonies with simulated devices, shared by
//! tests, scenarios and benchmarks.

use crate::authenticator::{AssertionResponse, AuthenticatorDevice, AuthenticatorError, DeviceKind};
use crate::crypto::{Entropy, Nonce};
use crate::face::{FaceError, FaceRegistry, EMBEDDING_DIM};
use crate::ids::{CredentialId, UserId};
use crate::orchestrator::StepEvidence;
use crate::rp::{Credential, RpError, RpServer};

/// PAD features the reference classifier scores well below the live threshold.
pub const LIVE_PAD: [f64; 4] = [0.05, 0.1, 0.05, 0.1];
/// PAD features the reference classifier scores well above the spoof threshold.
pub const SPOOF_PAD: [f64; 4] = [0.95, 0.9, 0.9, 0.85];

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Rp(#[from] RpError),
    #[error(transparent)]
    Device(#[from] AuthenticatorError),
    #[error(transparent)]
    Face(#[from] FaceError),
}

/// Unit vector with components drawn uniformly from [-0.5, 0.5) before
/// normalization.
pub fn random_unit(entropy: &Entropy) -> Vec<f64> {
    let v: Vec<f64> = (0..EMBEDDING_DIM)
        .map(|_| {
            let b: [u8; 8] = entropy.array();
            (u64::from_le_bytes(b) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// A unit vector whose cosine with unit vector `base` is exactly `cos`
/// (up to rounding): Gram-Schmidt a random direction against `base`.
pub fn at_cosine(base: &[f64], cos: f64, entropy: &Entropy) -> Vec<f64> {
    let r = random_unit(entropy);
    let d: f64 = r.iter().zip(base).map(|(a, b)| a * b).sum();
    let orth: Vec<f64> = r.iter().zip(base).map(|(a, b)| a - d * b).collect();
    let n = orth.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    base.iter().zip(&orth).map(|(b, o)| cos * b + sin * o / n).collect()
}

pub fn register_device(
    rp: &RpServer,
    device: &mut AuthenticatorDevice,
    user_id: &UserId,
) -> Result<Credential, SimError> {
    let challenge = rp.begin_registration(user_id, rp.rp_id())?;
    let attestation = device.make_credential(&challenge, rp.rp_id(), user_id)?;
    Ok(rp.finish_registration(&attestation, challenge.nonce())?)
}

/// Fresh challenge from `rp` and the device's assertion over it, not yet
/// submitted.
pub fn assert_once(
    rp: &RpServer,
    device: &mut AuthenticatorDevice,
    user_id: &UserId,
    credential_id: &CredentialId,
) -> Result<(AssertionResponse, Nonce), SimError> {
    let challenge = rp.begin_authentication(user_id, rp.rp_id())?;
    let assertion = device.get_assertion(&challenge, rp.rp_id(), credential_id, true)?;
    Ok((assertion, *challenge.nonce()))
}

/// A user holding a smartphone, a security key and a face template.
#[derive(Debug)]
pub struct EnrolledUser {
    pub user_id: UserId,
    pub phone: AuthenticatorDevice,
    pub phone_credential: CredentialId,
    pub key: AuthenticatorDevice,
    pub key_credential: CredentialId,
    pub face: Vec<f64>,
}

impl EnrolledUser {
    pub fn enroll(rp: &RpServer, faces: &FaceRegistry, email: &str, entropy: &Entropy) -> Result<Self, SimError> {
        let user = rp.register_user(email, email.split('@').next().unwrap_or(email))?;
        let user_id = user.user_id().clone();
        let mut phone = AuthenticatorDevice::with_clock(DeviceKind::Smartphone, rp.clock().clone());
        let phone_credential = register_device(rp, &mut phone, &user_id)?.credential_id;
        let mut key = AuthenticatorDevice::with_clock(DeviceKind::SecurityKey, rp.clock().clone());
        let key_credential = register_device(rp, &mut key, &user_id)?.credential_id;
        let face = random_unit(entropy);
        faces.enroll(&user_id, &face)?;
        Ok(Self {
            user_id,
            phone,
            phone_credential,
            key,
            key_credential,
            face,
        })
    }

    pub fn phone_evidence(&mut self, rp: &RpServer) -> Result<StepEvidence, SimError> {
        let (assertion, challenge_nonce) = assert_once(rp, &mut self.phone, &self.user_id, &self.phone_credential)?;
        Ok(StepEvidence::DeviceAttestation {
            assertion,
            challenge_nonce,
        })
    }

    pub fn key_evidence(&mut self, rp: &RpServer) -> Result<StepEvidence, SimError> {
        let (assertion, challenge_nonce) = assert_once(rp, &mut self.key, &self.user_id, &self.key_credential)?;
        Ok(StepEvidence::SecurityKey {
            assertion,
            challenge_nonce,
            device_confirmed: true,
        })
    }

    pub fn face_evidence(&self) -> StepEvidence {
        StepEvidence::Face {
            probe: self.face.clone(),
            pad_features: LIVE_PAD.to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::face::{pad_classify, similarity, PadClass, ReferencePad};

    #[test]
    fn fixed_pad_features_classify_as_named() {
        assert_eq!(pad_classify(&ReferencePad, &LIVE_PAD).unwrap().class, PadClass::NotSpoof);
        assert_eq!(pad_classify(&ReferencePad, &SPOOF_PAD).unwrap().class, PadClass::Spoof);
    }

    #[test]
    fn at_cosine_hits_requested_angle() {
        let e = Entropy::seeded(3);
        let base = random_unit(&e);
        for cos in [-0.9, 0.0, 0.6, 0.99] {
            let v = at_cosine(&base, cos, &e);
            assert!((similarity(&base, &v).unwrap() - (1.0 + cos) / 2.0).abs() < 1e-12);
        }
    }
}
