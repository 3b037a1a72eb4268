//! Opaque identifier newtypes.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! opaque_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Self {
                Self(value.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(value: &str) -> Self {
                Self(value.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(value: String) -> Self {
                Self(value)
            }
        }
    };
}

opaque_id!(
    /// Identifies an account in the identity registry.
    UserId
);
opaque_id!(
    /// Identifies one key slot on one authenticator.
    CredentialId
);
opaque_id!(
    /// Identifies a physical (here: simulated) authenticator.
    DeviceId
);
opaque_id!(
    /// Identifies a login session in the orchestrator.
    SessionId
);
opaque_id!(
    /// Identifies a generated keypair.
    KeyId
);
opaque_id!(
    /// Identifies one audit record.
    ActionId
);
