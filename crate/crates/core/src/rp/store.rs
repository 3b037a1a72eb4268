//! JSON-lines persistence for users and credentials.
//!
//! One record per line, tagged by `record`. Files are rewritten whole via a
//! temporary sibling and a rename, but the format is append-friendly: a reader
//! applies records in order and the last one for an id wins.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Credential, RpError, UserIdentity};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum StoreRecord {
    User(UserIdentity),
    Credential(Credential),
}

pub(super) fn write_records(path: &Path, records: &[StoreRecord]) -> Result<(), RpError> {
    let tmp = path.with_extension("tmp");
    {
        let mut out = std::io::BufWriter::new(fs::File::create(&tmp)?);
        for r in records {
            let line = serde_json::to_string(r).map_err(|e| RpError::Validation(e.to_string()))?;
            out.write_all(line.as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub(super) fn read_records(path: &Path) -> Result<Vec<StoreRecord>, RpError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| RpError::Corrupt {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}
