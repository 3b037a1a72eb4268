//! Labeled PAD datasets in delimited text.
//!
//! One sample per line: 128 embedding components, then the PAD feature block,
//! then the label (`not_spoof` / `spoof`, case-insensitive; `live` and
//! `Not spoof` are accepted too), all comma-separated. Lines starting with
//! `#` are comments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pad::{PadClass, PAD_FEATURE_DIM};
use super::{FaceError, EMBEDDING_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub embedding: Vec<f64>,
    pub pad_features: Vec<f64>,
    pub label: PadClass,
}

impl LabeledSample {
    pub fn to_line(&self) -> String {
        let label = match self.label {
            PadClass::NotSpoof => "not_spoof",
            PadClass::Spoof => "spoof",
            PadClass::Uncertain => "uncertain",
        };
        self.embedding
            .iter()
            .chain(&self.pad_features)
            .map(|x| format!("{x}"))
            .chain(std::iter::once(label.to_owned()))
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn parse_label(raw: &str) -> Option<PadClass> {
    match raw.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
        "not_spoof" | "notspoof" | "live" => Some(PadClass::NotSpoof),
        "spoof" | "attack" => Some(PadClass::Spoof),
        _ => None,
    }
}

pub fn parse_dataset(text: &str) -> Result<Vec<LabeledSample>, FaceError> {
    let expected = EMBEDDING_DIM + PAD_FEATURE_DIM + 1;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| FaceError::Validation(format!("line {}: {e}", i + 1)))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != expected {
            return Err(FaceError::Validation(format!(
                "sample {}: expected {expected} fields, got {}",
                i + 1,
                record.len()
            )));
        }
        let numbers = record
            .iter()
            .take(expected - 1)
            .map(|f| f.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| FaceError::Validation(format!("sample {}: bad number", i + 1)))?;
        let label = parse_label(&record[expected - 1])
            .ok_or_else(|| FaceError::Validation(format!("sample {}: bad label {:?}", i + 1, &record[expected - 1])))?;
        let (embedding, features) = numbers.split_at(EMBEDDING_DIM);
        out.push(LabeledSample {
            embedding: embedding.to_vec(),
            pad_features: features.to_vec(),
            label,
        });
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<LabeledSample>, FaceError> {
    let text = std::fs::read_to_string(path).map_err(|e| FaceError::Validation(format!("{}: {e}", path.display())))?;
    parse_dataset(&text)
}
