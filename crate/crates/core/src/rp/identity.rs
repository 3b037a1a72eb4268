use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RpError;
use crate::ids::UserId;

/// A registered person. The display name is fixed at registration: there is
/// no rename operation anywhere in the crate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserIdentity {
    user_id: UserId,
    email: String,
    display_name: String,
    face_template_ref: Option<String>,
    created_at_ms: u64,
}

impl UserIdentity {
    pub fn user_id(&self) -> &UserId {
        &self.user_id
    }

    pub fn email(&self) -> &str {
        &self.email
    }

    pub fn display_name(&self) -> &str {
        &self.display_name
    }

    pub fn face_template_ref(&self) -> Option<&str> {
        self.face_template_ref.as_deref()
    }

    pub fn created_at_ms(&self) -> u64 {
        self.created_at_ms
    }
}

pub(crate) fn normalize_email(email: &str) -> String {
    email.trim().to_ascii_lowercase()
}

#[derive(Debug, Default)]
pub(crate) struct IdentityRegistry {
    users: BTreeMap<UserId, UserIdentity>,
    by_email: BTreeMap<String, UserId>,
}

impl IdentityRegistry {
    pub fn register(
        &mut self,
        user_id: UserId,
        email: &str,
        display_name: &str,
        now_ms: u64,
    ) -> Result<UserIdentity, RpError> {
        let email = normalize_email(email);
        let display_name = display_name.trim();
        if email.is_empty() || !email.contains('@') {
            return Err(RpError::Validation(format!("invalid email {email:?}")));
        }
        if display_name.is_empty() {
            return Err(RpError::Validation("display name must not be empty".into()));
        }
        if self.by_email.contains_key(&email) {
            return Err(RpError::EmailTaken(email));
        }
        let user = UserIdentity {
            user_id,
            email,
            display_name: display_name.to_owned(),
            face_template_ref: None,
            created_at_ms: now_ms,
        };
        self.insert(user.clone());
        Ok(user)
    }

    /// Used by store loading; later records for the same id win.
    pub fn insert(&mut self, user: UserIdentity) {
        if let Some(prev) = self.users.get(&user.user_id) {
            self.by_email.remove(&prev.email);
        }
        self.by_email.insert(user.email.clone(), user.user_id.clone());
        self.users.insert(user.user_id.clone(), user);
    }

    pub fn get(&self, user_id: &UserId) -> Option<&UserIdentity> {
        self.users.get(user_id)
    }

    pub fn by_email(&self, email: &str) -> Option<&UserIdentity> {
        self.by_email
            .get(&normalize_email(email))
            .and_then(|id| self.users.get(id))
    }

    pub fn set_face_ref(&mut self, user_id: &UserId, reference: String) -> Result<(), RpError> {
        let user = self
            .users
            .get_mut(user_id)
            .ok_or_else(|| RpError::NoSuchUser(user_id.clone()))?;
        user.face_template_ref = Some(reference);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &UserIdentity> {
        self.users.values()
    }
}
