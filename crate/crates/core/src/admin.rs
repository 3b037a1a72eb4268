//! Administrator surface for the credential lifecycle.
//!
//! Every successful admin call appends exactly one [`AdminAction`] to the
//! audit log, which can be mirrored to an append-only JSON-lines file.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::ids::{ActionId, CredentialId, DeviceId, UserId};
use crate::rp::{Credential, RpError, RpServer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdminActionKind {
    Revoke,
    RemoteWipe,
    ListKeys,
}

impl AdminActionKind {
    pub fn is_state_changing(self) -> bool {
        !matches!(self, AdminActionKind::ListKeys)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminAction {
    pub action_id: ActionId,
    pub actor: String,
    pub kind: AdminActionKind,
    pub target: String,
    pub timestamp_ms: u64,
}

#[derive(Debug, Error)]
pub enum AdminError {
    #[error("admin credentials rejected")]
    Unauthorized,
    #[error(transparent)]
    Rp(#[from] RpError),
    #[error("audit log: {0}")]
    Audit(#[from] std::io::Error),
}

#[derive(Debug)]
pub struct KeyAdmin {
    rp: Arc<RpServer>,
    bearer_secret: String,
    audit: Mutex<Vec<AdminAction>>,
    audit_path: Option<PathBuf>,
}

impl KeyAdmin {
    pub fn new(rp: Arc<RpServer>, bearer_secret: impl Into<String>) -> Self {
        Self {
            rp,
            bearer_secret: bearer_secret.into(),
            audit: Mutex::new(Vec::new()),
            audit_path: None,
        }
    }

    /// Also append every audit record to `path`.
    pub fn with_audit_file(mut self, path: PathBuf) -> Self {
        self.audit_path = Some(path);
        self
    }

    pub fn authorize(&self, presented: &str) -> Result<(), AdminError> {
        if !self.bearer_secret.is_empty() && bool::from(presented.as_bytes().ct_eq(self.bearer_secret.as_bytes())) {
            Ok(())
        } else {
            Err(AdminError::Unauthorized)
        }
    }

    fn record(&self, actor: &str, kind: AdminActionKind, target: String) -> Result<(), AdminError> {
        let action = AdminAction {
            action_id: ActionId::new(format!("act-{}", self.rp.entropy().hex_id(8))),
            actor: actor.to_owned(),
            kind,
            target,
            timestamp_ms: self.rp.now_ms(),
        };
        let mut log = self.audit.lock();
        if let Some(path) = &self.audit_path {
            let mut line = serde_json::to_string(&action).map_err(std::io::Error::other)?;
            line.push('\n');
            OpenOptions::new().create(true).append(true).open(path)?.write_all(line.as_bytes())?;
        }
        log.push(action);
        Ok(())
    }

    pub fn audit_log(&self) -> Vec<AdminAction> {
        self.audit.lock().clone()
    }

    /// All credentials of a user, any state. Records only ever hold public keys.
    pub fn list_credentials(&self, actor: &str, user_id: &UserId) -> Result<Vec<Credential>, AdminError> {
        let creds = self.rp.credentials_for_user(user_id)?;
        self.record(actor, AdminActionKind::ListKeys, user_id.to_string())?;
        Ok(creds)
    }

    pub fn revoke_credential(&self, actor: &str, credential_id: &CredentialId) -> Result<Credential, AdminError> {
        let cred = self.rp.revoke_credential(credential_id)?;
        self.record(actor, AdminActionKind::Revoke, credential_id.to_string())?;
        Ok(cred)
    }

    /// Locks out every credential on the device immediately; the device
    /// itself destroys its keys on its next check-in.
    pub fn remote_wipe(&self, actor: &str, device_id: &DeviceId) -> Result<usize, AdminError> {
        let n = self.rp.wipe_device(device_id)?;
        self.record(actor, AdminActionKind::RemoteWipe, device_id.to_string())?;
        Ok(n)
    }
}
