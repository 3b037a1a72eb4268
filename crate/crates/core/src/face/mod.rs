//! Face verification layer.
//!
//! Faces are handled as 128-dimensional embeddings rather than images. A probe
//! is first screened by a presentation-attack classifier; only probes judged
//! live are matched against the enrolled template.

mod dataset;
mod evaluation;
mod pad;

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{load_dataset, parse_dataset, LabeledSample};
pub use evaluation::{evaluate_pad, ConfusionMatrix};
pub use pad::{pad_classify, PadClass, PadClassifier, PadVerdict, ReferencePad, PAD_FEATURE_DIM, REFERENCE_WEIGHTS};

use crate::clock::{system_clock, SharedClock};
use crate::ids::UserId;

pub const EMBEDDING_DIM: usize = 128;
pub const MATCH_THRESHOLD: f64 = 0.80;

#[derive(Debug, Error, PartialEq)]
pub enum FaceError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("no face template enrolled for {0}")]
    NoTemplate(UserId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceTemplate {
    vector: Vec<f64>,
    pub user_id: UserId,
    pub enrolled_at_ms: u64,
}

impl FaceTemplate {
    pub fn vector(&self) -> &[f64] {
        &self.vector
    }
}

fn check_embedding(vector: &[f64]) -> Result<f64, FaceError> {
    if vector.len() != EMBEDDING_DIM {
        return Err(FaceError::Validation(format!(
            "embedding must have {EMBEDDING_DIM} components, got {}",
            vector.len()
        )));
    }
    if vector.iter().any(|x| !x.is_finite()) {
        return Err(FaceError::Validation("embedding has non-finite components".into()));
    }
    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(FaceError::Validation("embedding must be nonzero".into()));
    }
    Ok(norm)
}

/// Normalizes `vector` to unit length and binds it to `user_id`.
pub fn enroll_template(user_id: UserId, vector: &[f64], now_ms: u64) -> Result<FaceTemplate, FaceError> {
    let norm = check_embedding(vector)?;
    Ok(FaceTemplate {
        vector: vector.iter().map(|x| x / norm).collect(),
        user_id,
        enrolled_at_ms: now_ms,
    })
}

/// `(1 + cos θ) / 2`: 1 for identical direction, 0.5 orthogonal, 0 antipodal.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64, FaceError> {
    let na = check_embedding(a)?;
    let nb = check_embedding(b)?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let cos = (dot / (na * nb)).clamp(-1.0, 1.0);
    Ok(((1.0 + cos) / 2.0).clamp(0.0, 1.0))
}

pub fn match_template(probe: &[f64], template: &FaceTemplate) -> Result<f64, FaceError> {
    similarity(probe, &template.vector)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceDecision {
    pub accepted: bool,
    pub confidence: f64,
    pub pad: PadVerdict,
}

/// Template store plus the verification pipeline.
pub struct FaceRegistry {
    templates: RwLock<HashMap<UserId, FaceTemplate>>,
    classifier: Arc<dyn PadClassifier>,
    clock: SharedClock,
    threshold: f64,
}

impl std::fmt::Debug for FaceRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FaceRegistry")
            .field("templates", &self.templates.read().len())
            .field("threshold", &self.threshold)
            .finish()
    }
}

impl Default for FaceRegistry {
    fn default() -> Self {
        Self::new(Arc::new(ReferencePad), system_clock())
    }
}

impl FaceRegistry {
    pub fn new(classifier: Arc<dyn PadClassifier>, clock: SharedClock) -> Self {
        Self {
            templates: RwLock::new(HashMap::new()),
            classifier,
            clock,
            threshold: MATCH_THRESHOLD,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn classifier(&self) -> &dyn PadClassifier {
        self.classifier.as_ref()
    }

    /// Enrolls (or re-enrolls, replacing) the user's template.
    pub fn enroll(&self, user_id: &UserId, vector: &[f64]) -> Result<FaceTemplate, FaceError> {
        let template = enroll_template(user_id.clone(), vector, self.clock.now_ms())?;
        self.templates.write().insert(user_id.clone(), template.clone());
        Ok(template)
    }

    pub fn template(&self, user_id: &UserId) -> Option<FaceTemplate> {
        self.templates.read().get(user_id).cloned()
    }

    pub fn has_template(&self, user_id: &UserId) -> bool {
        self.templates.read().contains_key(user_id)
    }

    pub fn templates(&self) -> Vec<FaceTemplate> {
        self.templates.read().values().cloned().collect()
    }

    pub fn insert_template(&self, template: FaceTemplate) -> Result<(), FaceError> {
        check_embedding(&template.vector)?;
        self.templates.write().insert(template.user_id.clone(), template);
        Ok(())
    }

    /// PAD runs first. Anything other than a live verdict is rejected with
    /// confidence 0 and the template is never consulted.
    pub fn verify_face(&self, user_id: &UserId, probe: &[f64], pad_features: &[f64]) -> Result<FaceDecision, FaceError> {
        let template = self
            .template(user_id)
            .ok_or_else(|| FaceError::NoTemplate(user_id.clone()))?;
        let pad = pad_classify(self.classifier.as_ref(), pad_features)?;
        if pad.class != PadClass::NotSpoof {
            check_embedding(probe)?;
            return Ok(FaceDecision {
                accepted: false,
                confidence: 0.0,
                pad,
            });
        }
        let confidence = match_template(probe, &template)?;
        Ok(FaceDecision {
            accepted: confidence >= self.threshold,
            confidence,
            pad,
        })
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::crypto::Entropy;

    pub(crate) fn random_unit(entropy: &Entropy) -> Vec<f64> {
        let v: Vec<f64> = (0..EMBEDDING_DIM)
            .map(|_| {
                let raw: [u8; 8] = entropy.array();
                (u64::from_le_bytes(raw) as f64 / u64::MAX as f64) * 2.0 - 1.0
            })
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    /// Gram-Schmidt: a unit vector at exactly `cos` to unit vector `t`.
    fn at_cosine(t: &[f64], other: &[f64], cos: f64) -> Vec<f64> {
        let d: f64 = t.iter().zip(other).map(|(a, b)| a * b).sum();
        let perp: Vec<f64> = other.iter().zip(t).map(|(o, a)| o - d * a).collect();
        let pn = perp.iter().map(|x| x * x).sum::<f64>().sqrt();
        let sin = (1.0 - cos * cos).sqrt();
        t.iter().zip(&perp).map(|(a, p)| cos * a + sin * p / pn).collect()
    }

    const LIVE: [f64; PAD_FEATURE_DIM] = [0.1; PAD_FEATURE_DIM];
    const REPLAY: [f64; PAD_FEATURE_DIM] = [0.9; PAD_FEATURE_DIM];

    fn registry_with(user: &str, v: &[f64]) -> FaceRegistry {
        let reg = FaceRegistry::default();
        reg.enroll(&UserId::from(user), v).unwrap();
        reg
    }

    #[test]
    fn enrollment_normalizes() {
        let t = enroll_template(UserId::from("u"), &[2.0; EMBEDDING_DIM], 0).unwrap();
        let norm = t.vector().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn enrollment_rejects_bad_vectors() {
        let u = UserId::from("u");
        assert!(matches!(enroll_template(u.clone(), &[0.0; EMBEDDING_DIM], 0), Err(FaceError::Validation(_))));
        let mut nan = vec![1.0; EMBEDDING_DIM];
        nan[5] = f64::NAN;
        assert!(enroll_template(u.clone(), &nan, 0).is_err());
        assert!(enroll_template(u, &[1.0; 3], 0).is_err());
    }

    #[test]
    fn reenrollment_replaces_template() {
        let e = Entropy::seeded(1);
        let v1 = random_unit(&e);
        let v2 = random_unit(&e);
        let reg = registry_with("u", &v1);
        reg.enroll(&UserId::from("u"), &v2).unwrap();
        let d2 = reg.verify_face(&UserId::from("u"), &v2, &LIVE).unwrap();
        assert!((d2.confidence - 1.0).abs() < 1e-12);
        let d1 = reg.verify_face(&UserId::from("u"), &v1, &LIVE).unwrap();
        assert!(d1.confidence < 1.0 - 1e-6);
    }

    #[test]
    fn similarity_reference_points() {
        let e = Entropy::seeded(2);
        let t = enroll_template(UserId::from("u"), &random_unit(&e), 0).unwrap();
        let neg: Vec<f64> = t.vector().iter().map(|x| -x).collect();
        let orth = at_cosine(t.vector(), &random_unit(&e), 0.0);
        assert!((match_template(t.vector(), &t).unwrap() - 1.0).abs() < 1e-12);
        assert!(match_template(&neg, &t).unwrap().abs() < 1e-12);
        assert!((match_template(&orth, &t).unwrap() - 0.5).abs() < 1e-12);
        assert!(match_template(&[1.0; 127], &t).is_err());
    }

    #[test]
    fn live_exact_probe_is_accepted() {
        let e = Entropy::seeded(3);
        let v = random_unit(&e);
        let d = registry_with("u", &v).verify_face(&UserId::from("u"), &v, &LIVE).unwrap();
        assert!(d.accepted);
        assert!((d.confidence - 1.0).abs() < 1e-12);
        assert_eq!(d.pad.class, PadClass::NotSpoof);
    }

    #[test]
    fn spoof_gate_dominates_perfect_match() {
        let e = Entropy::seeded(4);
        let v = random_unit(&e);
        let d = registry_with("u", &v).verify_face(&UserId::from("u"), &v, &REPLAY).unwrap();
        assert!(!d.accepted);
        assert_eq!(d.confidence, 0.0);
        assert_eq!(d.pad.class, PadClass::Spoof);
    }

    #[test]
    fn confidence_just_below_threshold_is_rejected() {
        let e = Entropy::seeded(5);
        let v = random_unit(&e);
        // confidence 0.79 <=> cosine 0.58
        let probe = at_cosine(&v, &random_unit(&e), 2.0 * 0.79 - 1.0);
        let d = registry_with("u", &v).verify_face(&UserId::from("u"), &probe, &LIVE).unwrap();
        assert!((d.confidence - 0.79).abs() < 1e-9);
        assert!(!d.accepted);
        let probe = at_cosine(&v, &random_unit(&e), 2.0 * 0.81 - 1.0);
        assert!(registry_with("u", &v).verify_face(&UserId::from("u"), &probe, &LIVE).unwrap().accepted);
    }

    #[test]
    fn missing_template() {
        let reg = FaceRegistry::default();
        assert_eq!(
            reg.verify_face(&UserId::from("x"), &[1.0; EMBEDDING_DIM], &LIVE),
            Err(FaceError::NoTemplate(UserId::from("x")))
        );
    }

    fn embedding() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0f64..1.0, EMBEDDING_DIM)
            .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
    }

    proptest! {
        #[test]
        fn similarity_is_symmetric(a in embedding(), b in embedding()) {
            let ab = similarity(&a, &b).unwrap();
            let ba = similarity(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn similarity_is_scale_invariant(a in embedding(), b in embedding(), k in 1e-3f64..1e3) {
            let scaled: Vec<f64> = a.iter().map(|x| x * k).collect();
            prop_assert!((similarity(&a, &b).unwrap() - similarity(&scaled, &b).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn spoof_verdict_never_accepted(v in embedding(), feats in proptest::collection::vec(0.0f64..1.0, PAD_FEATURE_DIM)) {
            let reg = registry_with("u", &v);
            let d = reg.verify_face(&UserId::from("u"), &v, &feats).unwrap();
            if d.pad.class != PadClass::NotSpoof {
                prop_assert!(!d.accepted);
            }
            if d.accepted {
                prop_assert!(d.pad.class == PadClass::NotSpoof && d.confidence >= MATCH_THRESHOLD);
            }
        }
    }
}
