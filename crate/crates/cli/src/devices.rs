//! Simulated devices kept between command invocations, sealed on disk.

use std::path::{Path, PathBuf};

use passgate_core::{
    AuthenticatorDevice, AuthenticatorError, CredentialId, DeviceId, DeviceKind, SealedDevice, UserId,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DeviceStoreError {
    #[error("device store needs a non-empty client.device_secret")]
    NoSecret,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Device(#[from] AuthenticatorError),
    #[error("no stored {kind} for user {user}")]
    NotFound { user: UserId, kind: DeviceKind },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub owner: UserId,
    pub credentials: Vec<CredentialId>,
    pub sealed: SealedDevice,
}

#[derive(Debug)]
pub struct DeviceStore {
    dir: PathBuf,
    secret: String,
}

impl DeviceStore {
    pub fn open(dir: &Path, secret: &str) -> Result<Self, DeviceStoreError> {
        if secret.is_empty() {
            return Err(DeviceStoreError::NoSecret);
        }
        std::fs::create_dir_all(dir).map_err(|source| DeviceStoreError::Io {
            path: dir.to_owned(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_owned(),
            secret: secret.to_owned(),
        })
    }

    fn device_path(&self, id: &DeviceId) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn face_path(&self, user: &UserId) -> PathBuf {
        self.dir.join(format!("{user}.face.json"))
    }

    pub fn save(
        &self,
        device: &AuthenticatorDevice,
        owner: &UserId,
        credentials: Vec<CredentialId>,
    ) -> Result<(), DeviceStoreError> {
        let record = DeviceRecord {
            owner: owner.clone(),
            credentials,
            sealed: device.seal(self.secret.as_bytes())?,
        };
        write_json(&self.device_path(device.device_id()), &record)
    }

    pub fn load(&self, id: &DeviceId) -> Result<(AuthenticatorDevice, DeviceRecord), DeviceStoreError> {
        let record: DeviceRecord = read_json(&self.device_path(id))?;
        let device = AuthenticatorDevice::unseal(&record.sealed, self.secret.as_bytes(), passgate_core::clock::system_clock())?;
        Ok((device, record))
    }

    /// First stored device of `kind` owned by `user`, by device id.
    pub fn find(&self, user: &UserId, kind: DeviceKind) -> Result<(AuthenticatorDevice, DeviceRecord), DeviceStoreError> {
        let entries = std::fs::read_dir(&self.dir).map_err(|source| DeviceStoreError::Io {
            path: self.dir.clone(),
            source,
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                name.ends_with(".json") && !name.ends_with(".face.json")
            })
            .collect();
        paths.sort();
        for path in paths {
            let record: DeviceRecord = read_json(&path)?;
            if &record.owner == user && record.sealed.kind == kind {
                return self.load(&record.sealed.device_id);
            }
        }
        Err(DeviceStoreError::NotFound {
            user: user.clone(),
            kind,
        })
    }

    /// The simulated camera's view of `user`.
    pub fn save_face(&self, user: &UserId, vector: &[f64]) -> Result<(), DeviceStoreError> {
        write_json(&self.face_path(user), &vector)
    }

    pub fn load_face(&self, user: &UserId) -> Result<Vec<f64>, DeviceStoreError> {
        read_json(&self.face_path(user))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DeviceStoreError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| DeviceStoreError::Format {
        path: path.to_owned(),
        source,
    })?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)
        .and_then(|()| std::fs::rename(&tmp, path))
        .map_err(|source| DeviceStoreError::Io {
            path: path.to_owned(),
            source,
        })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DeviceStoreError> {
    let text = std::fs::read_to_string(path).map_err(|source| DeviceStoreError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| DeviceStoreError::Format {
        path: path.to_owned(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sealed_round_trip_and_wrong_secret() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(DeviceStore::open(dir.path(), ""), Err(DeviceStoreError::NoSecret)));
        let store = DeviceStore::open(dir.path(), "local").unwrap();
        let device = AuthenticatorDevice::new(DeviceKind::Smartphone);
        let owner = UserId::from("usr-1");
        store.save(&device, &owner, vec![]).unwrap();
        let (back, record) = store.find(&owner, DeviceKind::Smartphone).unwrap();
        assert_eq!(back.device_id(), device.device_id());
        assert_eq!(record.owner, owner);
        assert!(matches!(
            store.find(&owner, DeviceKind::SecurityKey),
            Err(DeviceStoreError::NotFound { .. })
        ));
        let text = std::fs::read_to_string(dir.path().join(format!("{}.json", device.device_id()))).unwrap();
        assert!(!text.contains("PRIVATE"));

        let other = DeviceStore::open(dir.path(), "different").unwrap();
        assert!(matches!(
            other.load(device.device_id()),
            Err(DeviceStoreError::Device(AuthenticatorError::SealBroken))
        ));
    }
}
