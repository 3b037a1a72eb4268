//! Typed calls over a [`Transport`].

use passgate_core::api::{
    AdvanceRequest, ApiResponse, BeginRequest, CheckinRequest, CreateUserRequest, EnrollFaceRequest,
    FinishAuthenticationRequest, FinishRegistrationRequest, IntrospectRequest, IntrospectResponse, LoginRequest,
    Method, RevokeRequest, SessionRef, WipeRequest, WipeResponse,
};
use passgate_core::{
    AdminAction, AssertionResponse, AttestationResponse, AuthSession, Challenge, Credential, CredentialId, DeviceDirective,
    DeviceId, Nonce, PendingRequest, SessionId, Step, StepEvidence, StepOutcome, UserId, UserIdentity,
    VerificationResult,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::transport::{Transport, TransportError};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("{status} {code}: {message}")]
    Api {
        status: u16,
        code: String,
        message: String,
        body: Value,
    },
    #[error("unexpected response shape: {0}")]
    Decode(#[from] serde_json::Error),
}

impl ClientError {
    /// The server's error code, if the server answered.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            _ => None,
        }
    }
}

#[derive(Debug, Deserialize)]
struct Directives {
    directives: Vec<DeviceDirective>,
}

#[derive(Clone, Debug)]
pub struct Client {
    transport: Transport,
    admin_secret: Option<String>,
}

impl Client {
    pub fn new(transport: Transport) -> Self {
        Self {
            transport,
            admin_secret: None,
        }
    }

    pub fn with_admin_secret(mut self, secret: impl Into<String>) -> Self {
        self.admin_secret = Some(secret.into());
        self
    }

    pub fn transport(&self) -> &Transport {
        &self.transport
    }

    fn call<T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        admin: bool,
        body: Option<Value>,
    ) -> Result<T, ClientError> {
        let bearer = if admin { self.admin_secret.as_deref() } else { None };
        let ApiResponse { status, body } = self.transport.call(method, path, bearer, body.as_ref())?;
        if !(200..300).contains(&status) {
            return Err(ClientError::Api {
                status,
                code: body["error"].as_str().unwrap_or("unknown").to_owned(),
                message: body["message"].as_str().unwrap_or_default().to_owned(),
                body,
            });
        }
        Ok(serde_json::from_value(body)?)
    }

    fn post<T: DeserializeOwned>(&self, path: &str, body: impl Serialize) -> Result<T, ClientError> {
        self.call(Method::Post, path, false, Some(serde_json::to_value(body)?))
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        self.call(Method::Get, path, false, None)
    }

    /// The server's rp_id.
    pub fn health(&self) -> Result<String, ClientError> {
        let v: Value = self.get("/health")?;
        Ok(v["rp_id"].as_str().unwrap_or_default().to_owned())
    }

    pub fn create_user(&self, email: &str, display_name: &str) -> Result<UserIdentity, ClientError> {
        self.post(
            "/users",
            CreateUserRequest {
                email: email.into(),
                display_name: display_name.into(),
            },
        )
    }

    pub fn user(&self, user_id: &UserId) -> Result<UserIdentity, ClientError> {
        self.get(&format!("/users/{user_id}"))
    }

    pub fn begin_registration(&self, user_id: &UserId) -> Result<Challenge, ClientError> {
        self.post(
            "/registration/begin",
            BeginRequest {
                user_id: user_id.clone(),
                rp_id: None,
            },
        )
    }

    pub fn finish_registration(
        &self,
        attestation: &AttestationResponse,
        challenge_nonce: &Nonce,
    ) -> Result<Credential, ClientError> {
        self.post(
            "/registration/finish",
            FinishRegistrationRequest {
                attestation: attestation.clone(),
                challenge_nonce: *challenge_nonce,
            },
        )
    }

    pub fn begin_authentication(&self, user_id: &UserId) -> Result<Challenge, ClientError> {
        self.post(
            "/authentication/begin",
            BeginRequest {
                user_id: user_id.clone(),
                rp_id: None,
            },
        )
    }

    pub fn finish_authentication(
        &self,
        assertion: &AssertionResponse,
        challenge_nonce: &Nonce,
    ) -> Result<VerificationResult, ClientError> {
        self.post(
            "/authentication/finish",
            FinishAuthenticationRequest {
                assertion: assertion.clone(),
                challenge_nonce: *challenge_nonce,
            },
        )
    }

    pub fn enroll_face(&self, user_id: &UserId, vector: &[f64]) -> Result<(), ClientError> {
        let _: Value = self.post(
            "/face/enroll",
            EnrollFaceRequest {
                user_id: user_id.clone(),
                vector: vector.to_vec(),
            },
        )?;
        Ok(())
    }

    pub fn introspect(&self, token: &[u8]) -> Result<IntrospectResponse, ClientError> {
        self.post("/session/introspect", IntrospectRequest { token: token.to_vec() })
    }

    pub fn checkin(&self, device_id: &DeviceId) -> Result<Vec<DeviceDirective>, ClientError> {
        let d: Directives = self.post(
            "/device/checkin",
            CheckinRequest {
                device_id: device_id.clone(),
            },
        )?;
        Ok(d.directives)
    }

    pub fn request_login(
        &self,
        user_id: &UserId,
        service_provider: &str,
        origin_device_descriptor: &str,
    ) -> Result<AuthSession, ClientError> {
        self.post(
            "/login/request",
            LoginRequest {
                user_id: user_id.clone(),
                service_provider: service_provider.into(),
                origin_device_descriptor: origin_device_descriptor.into(),
            },
        )
    }

    pub fn advance(&self, session_id: &SessionId, step: Step, evidence: StepEvidence) -> Result<StepOutcome, ClientError> {
        self.post(
            "/login/advance",
            AdvanceRequest {
                session_id: session_id.clone(),
                step,
                evidence,
            },
        )
    }

    pub fn deny(&self, session_id: &SessionId) -> Result<AuthSession, ClientError> {
        self.post(
            "/login/deny",
            SessionRef {
                session_id: session_id.clone(),
            },
        )
    }

    pub fn session(&self, session_id: &SessionId) -> Result<AuthSession, ClientError> {
        self.get(&format!("/login/status/{session_id}"))
    }

    pub fn approval_feed(&self, user_id: &UserId) -> Result<Vec<PendingRequest>, ClientError> {
        self.get(&format!("/login/feed/{user_id}"))
    }

    pub fn admin_list(&self, user_id: &UserId) -> Result<Vec<Credential>, ClientError> {
        self.call(Method::Get, &format!("/admin/credentials/{user_id}"), true, None)
    }

    pub fn admin_revoke(&self, credential_id: &CredentialId) -> Result<Credential, ClientError> {
        let body = serde_json::to_value(RevokeRequest {
            credential_id: credential_id.clone(),
            actor: None,
        })?;
        self.call(Method::Post, "/admin/revoke", true, Some(body))
    }

    pub fn admin_wipe(&self, device_id: &DeviceId) -> Result<WipeResponse, ClientError> {
        let body = serde_json::to_value(WipeRequest {
            device_id: device_id.clone(),
            actor: None,
        })?;
        self.call(Method::Post, "/admin/wipe", true, Some(body))
    }

    pub fn admin_audit(&self) -> Result<Vec<AdminAction>, ClientError> {
        self.call(Method::Get, "/admin/audit", true, None)
    }
}
