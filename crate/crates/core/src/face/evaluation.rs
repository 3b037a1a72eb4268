use std::fmt::Write as _;

use serde::Serialize;

use super::dataset::LabeledSample;
use super::pad::{pad_classify, PadClass, PadClassifier};
use super::FaceError;

const TRUE_CLASSES: [PadClass; 2] = [PadClass::NotSpoof, PadClass::Spoof];
const PREDICTED_CLASSES: [PadClass; 3] = [PadClass::NotSpoof, PadClass::Spoof, PadClass::Uncertain];

fn predicted_index(c: PadClass) -> usize {
    match c {
        PadClass::NotSpoof => 0,
        PadClass::Spoof => 1,
        PadClass::Uncertain => 2,
    }
}

/// Rows are true classes (not spoof, spoof); columns are predicted classes
/// (not spoof, spoof, uncertain). Rates are row-normalized; a row with no
/// samples has all-zero rates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 2],
    pub rates: [[f64; 3]; 2],
    pub accuracy: f64,
    pub f1: [f64; 2],
    pub total: u64,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 3]; 2]) -> Self {
        let total: u64 = counts.iter().flatten().sum();
        let mut rates = [[0.0; 3]; 2];
        for (row, rate_row) in counts.iter().zip(rates.iter_mut()) {
            let n: u64 = row.iter().sum();
            if n > 0 {
                for (c, r) in row.iter().zip(rate_row.iter_mut()) {
                    *r = *c as f64 / n as f64;
                }
            }
        }
        let correct = counts[0][0] + counts[1][1];
        let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        let mut f1 = [0.0; 2];
        for (k, f) in f1.iter_mut().enumerate() {
            let tp = counts[k][k] as f64;
            let predicted = (counts[0][k] + counts[1][k]) as f64;
            let actual: f64 = counts[k].iter().sum::<u64>() as f64;
            // 2PR / (P + R) simplifies to 2TP / (predicted + actual)
            *f = if predicted + actual == 0.0 { 0.0 } else { 2.0 * tp / (predicted + actual) };
        }
        Self {
            counts,
            rates,
            accuracy,
            f1,
            total,
        }
    }

    pub fn rate(&self, truth: PadClass, predicted: PadClass) -> f64 {
        let row = match truth {
            PadClass::NotSpoof => 0,
            PadClass::Spoof => 1,
            PadClass::Uncertain => return 0.0,
        };
        self.rates[row][predicted_index(predicted)]
    }

    /// Aligned text table: accuracy in the corner, one row per true class,
    /// then per-class F1.
    pub fn render_text(&self) -> String {
        let corner = format!("Accuracy={:.2}%", self.accuracy * 100.0);
        let w0 = corner.len().max("Not spoof".len()).max("F1 Score".len());
        let w = 11;
        let mut out = String::new();
        let _ = write!(out, "{corner:<w0$}");
        for c in PREDICTED_CLASSES {
            let _ = write!(out, " | {:>w$}", c.label());
        }
        out.push('\n');
        let _ = writeln!(out, "{}", "-".repeat(w0 + PREDICTED_CLASSES.len() * (w + 3)));
        for (i, t) in TRUE_CLASSES.iter().enumerate() {
            let _ = write!(out, "{:<w0$}", t.label());
            for r in self.rates[i] {
                let _ = write!(out, " | {:>w$}", format!("{:.1}%", r * 100.0));
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<w0$}", "F1 Score");
        for f in self.f1 {
            let _ = write!(out, " | {:>w$}", format!("{f:.2}"));
        }
        let _ = writeln!(out, " | {:>w$}", "");
        out
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Labeled<'a> {
            true_classes: [&'static str; 2],
            predicted_classes: [&'static str; 3],
            #[serde(flatten)]
            matrix: &'a ConfusionMatrix,
        }
        serde_json::to_string_pretty(&Labeled {
            true_classes: TRUE_CLASSES.map(PadClass::label),
            predicted_classes: PREDICTED_CLASSES.map(PadClass::label),
            matrix: self,
        })
        .unwrap_or_default()
    }
}

pub fn evaluate_pad(classifier: &dyn PadClassifier, samples: &[LabeledSample]) -> Result<ConfusionMatrix, FaceError> {
    if samples.is_empty() {
        return Err(FaceError::Validation("dataset is empty".into()));
    }
    let mut counts = [[0u64; 3]; 2];
    for s in samples {
        let row = match s.label {
            PadClass::NotSpoof => 0,
            PadClass::Spoof => 1,
            PadClass::Uncertain => {
                return Err(FaceError::Validation("labels must be not_spoof or spoof".into()));
            }
        };
        let verdict = pad_classify(classifier, &s.pad_features)?;
        counts[row][predicted_index(verdict.class)] += 1;
    }
    Ok(ConfusionMatrix::from_counts(counts))
}
