//! Presentation attack detection.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::FaceError;

/// Features the reference classifier consumes, each in `[0, 1]` where higher
/// means more spoof-like:
///
/// | index | cue                                   | weight |
/// |-------|---------------------------------------|--------|
/// | 0     | moiré / screen-refresh energy         | 0.35   |
/// | 1     | specular highlight ratio              | 0.25   |
/// | 2     | depth flatness                        | 0.25   |
/// | 3     | absence of micro-motion (blink, sway) | 0.15   |
pub const PAD_FEATURE_DIM: usize = 4;
pub const REFERENCE_WEIGHTS: [f64; PAD_FEATURE_DIM] = [0.35, 0.25, 0.25, 0.15];

pub const SPOOF_THRESHOLD: f64 = 0.7;
pub const LIVE_THRESHOLD: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadClass {
    NotSpoof,
    Spoof,
    Uncertain,
}

impl PadClass {
    pub fn from_score(score: f64) -> Self {
        if score >= SPOOF_THRESHOLD {
            PadClass::Spoof
        } else if score <= LIVE_THRESHOLD {
            PadClass::NotSpoof
        } else {
            PadClass::Uncertain
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PadClass::NotSpoof => "Not spoof",
            PadClass::Spoof => "Spoof",
            PadClass::Uncertain => "Uncertain",
        }
    }
}

impl fmt::Display for PadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PadVerdict {
    pub class: PadClass,
    pub spoof_score: f64,
}

/// Anything that maps a feature vector to a spoof score. Implementations must
/// be deterministic.
pub trait PadClassifier: Send + Sync {
    fn spoof_score(&self, features: &[f64]) -> Result<f64, FaceError>;
}

/// Weighted sum of the four cues, clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReferencePad;

impl PadClassifier for ReferencePad {
    fn spoof_score(&self, features: &[f64]) -> Result<f64, FaceError> {
        if features.len() != PAD_FEATURE_DIM {
            return Err(FaceError::Validation(format!(
                "expected {PAD_FEATURE_DIM} PAD features, got {}",
                features.len()
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(FaceError::Validation("PAD features must be finite".into()));
        }
        let score: f64 = features.iter().zip(REFERENCE_WEIGHTS).map(|(f, w)| f * w).sum();
        Ok(score.clamp(0.0, 1.0))
    }
}

pub fn pad_classify(classifier: &dyn PadClassifier, features: &[f64]) -> Result<PadVerdict, FaceError> {
    let spoof_score = classifier.spoof_score(features)?;
    if !spoof_score.is_finite() {
        return Err(FaceError::Validation("classifier produced a non-finite score".into()));
    }
    let spoof_score = spoof_score.clamp(0.0, 1.0);
    Ok(PadVerdict {
        class: PadClass::from_score(spoof_score),
        spoof_score,
    })
}
