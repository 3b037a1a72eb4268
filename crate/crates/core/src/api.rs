//! JSON wire surface shared by the HTTP server and the in-process client.
//!
//! [`Service::handle`] maps `(method, path, bearer, body)` to
//! `(status, json)` without any HTTP library, so the same dispatcher backs
//! both transports. Binary fields are standard base64. The route table and
//! body shapes are listed in `docs/wire-schema.md`.

use std::path::PathBuf;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::admin::{AdminError, KeyAdmin};
use crate::authenticator::{AssertionResponse, AttestationResponse};
use crate::crypto::Nonce;
use crate::face::{FaceError, FaceRegistry, FaceTemplate};
use crate::ids::{CredentialId, DeviceId, SessionId, UserId};
use crate::orchestrator::{Orchestrator, OrchestratorError, Step, StepEvidence};
use crate::rp::{RpError, RpServer};

pub const DEFAULT_ACTOR: &str = "admin";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GET" => Some(Method::Get),
            "POST" => Some(Method::Post),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
}

impl ApiResponse {
    fn ok<T: Serialize>(status: u16, body: &T) -> Self {
        Self {
            status,
            body: serde_json::to_value(body).unwrap_or(Value::Null),
        }
    }

    fn error(status: u16, code: &str, message: impl ToString) -> Self {
        Self {
            status,
            body: json!({ "error": code, "message": message.to_string() }),
        }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

// ---- request bodies ----

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateUserRequest {
    pub email: String,
    pub display_name: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BeginRequest {
    pub user_id: UserId,
    /// Defaults to the server's own rp_id.
    #[serde(default)]
    pub rp_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FinishRegistrationRequest {
    pub attestation: AttestationResponse,
    pub challenge_nonce: Nonce,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FinishAuthenticationRequest {
    pub assertion: AssertionResponse,
    pub challenge_nonce: Nonce,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EnrollFaceRequest {
    pub user_id: UserId,
    pub vector: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IntrospectRequest {
    #[serde(with = "crate::encoding::b64")]
    pub token: Vec<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IntrospectResponse {
    pub active: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub user_id: Option<UserId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub expires_at_ms: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckinRequest {
    pub device_id: DeviceId,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoginRequest {
    pub user_id: UserId,
    pub service_provider: String,
    pub origin_device_descriptor: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdvanceRequest {
    pub session_id: SessionId,
    pub step: Step,
    pub evidence: StepEvidence,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionRef {
    pub session_id: SessionId,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RevokeRequest {
    pub credential_id: CredentialId,
    #[serde(default)]
    pub actor: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WipeRequest {
    pub device_id: DeviceId,
    #[serde(default)]
    pub actor: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WipeResponse {
    pub device_id: DeviceId,
    pub wiped: usize,
}

// ---- error mapping ----

fn rp_error(e: RpError) -> ApiResponse {
    use RpError::*;
    let (status, code) = match &e {
        NoSuchUser(_) => (404, "no_such_user"),
        NoCredential(_) => (409, "no_credential"),
        EmailTaken(_) => (409, "email_taken"),
        Validation(_) => (400, "validation"),
        Registration(f) => {
            return ApiResponse {
                status: 422,
                body: json!({ "error": "registration_rejected", "failure": f, "message": e.to_string() }),
            }
        }
        DuplicateCredential(_) => (409, "duplicate_credential"),
        NoSuchCredential(_) => (404, "no_such_credential"),
        NoSuchDevice(_) => (404, "no_such_device"),
        AlreadyTerminal(..) => (409, "already_terminal"),
        SessionNotReady => (409, "session_not_ready"),
        SessionUserMismatch => (409, "session_user_mismatch"),
        Io(_) | Corrupt { .. } => (500, "store"),
    };
    ApiResponse::error(status, code, e)
}

fn face_error(e: FaceError) -> ApiResponse {
    match e {
        FaceError::Validation(_) => ApiResponse::error(400, "validation", e),
        FaceError::NoTemplate(_) => ApiResponse::error(409, "no_face_template", e),
    }
}

fn orchestrator_error(e: OrchestratorError) -> ApiResponse {
    use OrchestratorError::*;
    match e {
        NoSuchUser(_) => ApiResponse::error(404, "no_such_user", e),
        NoSuchSession(_) => ApiResponse::error(404, "no_such_session", e),
        Prerequisite(layer) => ApiResponse {
            status: 409,
            body: json!({ "error": "prerequisite", "layer": layer, "message": e.to_string() }),
        },
        OutOfOrder { expected, got } => ApiResponse {
            status: 409,
            body: json!({ "error": "out_of_order", "expected": expected, "got": got, "message": e.to_string() }),
        },
        EvidenceMismatch { .. } => ApiResponse::error(400, "evidence_mismatch", e),
        SessionExpired => ApiResponse::error(410, "session_expired", e),
        SessionTerminal(state) => ApiResponse {
            status: 409,
            body: json!({ "error": "session_terminal", "state": state, "message": e.to_string() }),
        },
        Face(f) => face_error(f),
    }
}

fn admin_error(e: AdminError) -> ApiResponse {
    match e {
        AdminError::Unauthorized => ApiResponse::error(401, "unauthorized", e),
        AdminError::Rp(rp) => rp_error(rp),
        AdminError::Audit(_) => ApiResponse::error(500, "audit", e),
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiResponse> {
    serde_json::from_slice(body).map_err(|e| ApiResponse::error(400, "bad_request", e))
}

fn respond<T: Serialize, E>(status: u16, r: Result<T, E>, map: fn(E) -> ApiResponse) -> ApiResponse {
    match r {
        Ok(v) => ApiResponse::ok(status, &v),
        Err(e) => map(e),
    }
}

/// Everything a server process hosts.
#[derive(Debug)]
pub struct Service {
    pub rp: Arc<RpServer>,
    pub faces: Arc<FaceRegistry>,
    pub orchestrator: Arc<Orchestrator>,
    pub admin: Arc<KeyAdmin>,
    store_path: Option<PathBuf>,
    faces_path: Option<PathBuf>,
}

impl Service {
    pub fn new(rp: Arc<RpServer>, faces: Arc<FaceRegistry>, admin_secret: &str) -> Self {
        let orchestrator = Arc::new(Orchestrator::new(rp.clone(), faces.clone()));
        let admin = Arc::new(KeyAdmin::new(rp.clone(), admin_secret));
        Self {
            rp,
            faces,
            orchestrator,
            admin,
            store_path: None,
            faces_path: None,
        }
    }

    pub fn with_admin(mut self, admin: KeyAdmin) -> Self {
        self.admin = Arc::new(admin);
        self
    }

    /// Loads users, credentials and face templates from `dir` if present, and
    /// writes them back after every change.
    pub fn with_persistence(mut self, dir: PathBuf) -> Result<Self, RpError> {
        std::fs::create_dir_all(&dir)?;
        let store = dir.join("credentials.jsonl");
        let faces = dir.join("faces.json");
        if store.exists() {
            self.rp.load_from(&store)?;
        }
        if faces.exists() {
            let text = std::fs::read_to_string(&faces)?;
            let templates: Vec<FaceTemplate> =
                serde_json::from_str(&text).map_err(|e| RpError::Corrupt { line: 0, message: e.to_string() })?;
            for t in templates {
                self.faces
                    .insert_template(t)
                    .map_err(|e| RpError::Corrupt { line: 0, message: e.to_string() })?;
            }
        }
        self.store_path = Some(store);
        self.faces_path = Some(faces);
        Ok(self)
    }

    fn persist(&self) -> Result<(), ApiResponse> {
        if let Some(path) = &self.store_path {
            self.rp.save_to(path).map_err(rp_error)?;
        }
        if let Some(path) = &self.faces_path {
            let mut templates = self.faces.templates();
            templates.sort_by(|a, b| a.user_id.cmp(&b.user_id));
            let text = serde_json::to_string(&templates).map_err(|e| ApiResponse::error(500, "store", e))?;
            std::fs::write(path, text).map_err(|e| ApiResponse::error(500, "store", e))?;
        }
        Ok(())
    }

    fn persisted(&self, response: ApiResponse) -> ApiResponse {
        if !response.is_success() {
            return response;
        }
        match self.persist() {
            Ok(()) => response,
            Err(e) => e,
        }
    }

    fn admin_call(&self, bearer: Option<&str>, f: impl FnOnce(&KeyAdmin) -> ApiResponse) -> ApiResponse {
        match self.admin.authorize(bearer.unwrap_or("")) {
            Ok(()) => f(&self.admin),
            Err(e) => admin_error(e),
        }
    }

    pub fn handle(&self, method: Method, path: &str, bearer: Option<&str>, body: &[u8]) -> ApiResponse {
        match self.route(method, path, bearer, body) {
            Ok(r) | Err(r) => r,
        }
    }

    fn route(&self, method: Method, path: &str, bearer: Option<&str>, body: &[u8]) -> Result<ApiResponse, ApiResponse> {
        let path = path.split('?').next().unwrap_or("");
        let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
        let rp_id = |r: &Option<String>| r.clone().unwrap_or_else(|| self.rp.rp_id().to_owned());
        use Method::*;
        Ok(match (method, segments.as_slice()) {
            (Get, ["health"]) => ApiResponse::ok(200, &json!({ "status": "ok", "rp_id": self.rp.rp_id() })),

            (Post, ["users"]) => {
                let req: CreateUserRequest = parse(body)?;
                let r = respond(201, self.rp.register_user(&req.email, &req.display_name), rp_error);
                self.persisted(r)
            }
            (Get, ["users", id]) => match self.rp.user(&UserId::from(*id)) {
                Some(u) => ApiResponse::ok(200, &u),
                None => ApiResponse::error(404, "no_such_user", format!("no such user {id}")),
            },

            (Post, ["registration", "begin"]) => {
                let req: BeginRequest = parse(body)?;
                respond(200, self.rp.begin_registration(&req.user_id, &rp_id(&req.rp_id)), rp_error)
            }
            (Post, ["registration", "finish"]) => {
                let req: FinishRegistrationRequest = parse(body)?;
                let r = respond(201, self.rp.finish_registration(&req.attestation, &req.challenge_nonce), rp_error);
                self.persisted(r)
            }
            (Post, ["authentication", "begin"]) => {
                let req: BeginRequest = parse(body)?;
                respond(200, self.rp.begin_authentication(&req.user_id, &rp_id(&req.rp_id)), rp_error)
            }
            (Post, ["authentication", "finish"]) => {
                let req: FinishAuthenticationRequest = parse(body)?;
                let result = self.rp.finish_authentication(&req.assertion, &req.challenge_nonce);
                self.persisted(ApiResponse::ok(200, &result))
            }

            (Post, ["face", "enroll"]) => {
                let req: EnrollFaceRequest = parse(body)?;
                if self.rp.user(&req.user_id).is_none() {
                    return Err(rp_error(RpError::NoSuchUser(req.user_id)));
                }
                let template = self.faces.enroll(&req.user_id, &req.vector).map_err(face_error)?;
                self.rp
                    .set_face_ref(&req.user_id, format!("face:{}", req.user_id))
                    .map_err(rp_error)?;
                self.persisted(ApiResponse::ok(
                    201,
                    &json!({ "user_id": template.user_id, "enrolled_at_ms": template.enrolled_at_ms }),
                ))
            }

            (Post, ["session", "introspect"]) => {
                let req: IntrospectRequest = parse(body)?;
                let resp = match self.rp.introspect(&req.token) {
                    Some(t) => IntrospectResponse {
                        active: true,
                        user_id: Some(t.user_id),
                        expires_at_ms: Some(t.expires_at_ms),
                    },
                    None => IntrospectResponse {
                        active: false,
                        user_id: None,
                        expires_at_ms: None,
                    },
                };
                ApiResponse::ok(200, &resp)
            }
            (Post, ["device", "checkin"]) => {
                let req: CheckinRequest = parse(body)?;
                ApiResponse::ok(200, &json!({ "directives": self.rp.device_checkin(&req.device_id) }))
            }

            (Post, ["login", "request"]) => {
                let req: LoginRequest = parse(body)?;
                respond(
                    201,
                    self.orchestrator
                        .request_login(&req.user_id, &req.service_provider, &req.origin_device_descriptor),
                    orchestrator_error,
                )
            }
            (Get, ["login", "feed", user]) => {
                respond(200, self.orchestrator.approval_feed(&UserId::from(*user)), orchestrator_error)
            }
            (Post, ["login", "advance"]) => {
                let req: AdvanceRequest = parse(body)?;
                let r = respond(
                    200,
                    self.orchestrator.advance(&req.session_id, req.step, req.evidence),
                    orchestrator_error,
                );
                // counters moved
                self.persisted(r)
            }
            (Post, ["login", "deny"]) => {
                let req: SessionRef = parse(body)?;
                respond(200, self.orchestrator.deny(&req.session_id), orchestrator_error)
            }
            (Get, ["login", "status", session]) => {
                respond(200, self.orchestrator.session(&SessionId::from(*session)), orchestrator_error)
            }

            (Get, ["admin", "credentials", user]) => self.admin_call(bearer, |a| {
                respond(200, a.list_credentials(DEFAULT_ACTOR, &UserId::from(*user)), admin_error)
            }),
            (Post, ["admin", "revoke"]) => {
                let req: RevokeRequest = parse(body)?;
                let r = self.admin_call(bearer, |a| {
                    let actor = req.actor.as_deref().unwrap_or(DEFAULT_ACTOR);
                    respond(200, a.revoke_credential(actor, &req.credential_id), admin_error)
                });
                self.persisted(r)
            }
            (Post, ["admin", "wipe"]) => {
                let req: WipeRequest = parse(body)?;
                let r = self.admin_call(bearer, |a| {
                    let actor = req.actor.as_deref().unwrap_or(DEFAULT_ACTOR);
                    respond(
                        200,
                        a.remote_wipe(actor, &req.device_id).map(|wiped| WipeResponse {
                            device_id: req.device_id.clone(),
                            wiped,
                        }),
                        admin_error,
                    )
                });
                self.persisted(r)
            }
            (Get, ["admin", "audit"]) => self.admin_call(bearer, |a| ApiResponse::ok(200, &a.audit_log())),

            _ => ApiResponse::error(404, "not_found", format!("no route for {method:?} {path}")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rp::RpConfig;

    fn service() -> Service {
        Service::new(
            Arc::new(RpServer::new(RpConfig::new("rp.example"))),
            Arc::new(FaceRegistry::default()),
            "secret",
        )
    }

    fn post(s: &Service, path: &str, body: Value) -> ApiResponse {
        s.handle(Method::Post, path, None, body.to_string().as_bytes())
    }

    #[test]
    fn unknown_routes_and_bad_bodies() {
        let s = service();
        assert_eq!(s.handle(Method::Get, "/nope", None, b"").status, 404);
        assert_eq!(s.handle(Method::Get, "/users", None, b"").status, 404);
        let r = s.handle(Method::Post, "/users", None, b"{not json");
        assert_eq!(r.status, 400);
        assert_eq!(r.body["error"], "bad_request");
        assert_eq!(s.handle(Method::Get, "/health", None, b"").body["rp_id"], "rp.example");
    }

    #[test]
    fn user_creation_and_errors() {
        let s = service();
        let r = post(&s, "/users", json!({ "email": "A@x.io", "display_name": "A" }));
        assert_eq!(r.status, 201, "{:?}", r.body);
        let id = r.body["user_id"].as_str().unwrap().to_owned();
        let dup = post(&s, "/users", json!({ "email": "a@x.io", "display_name": "B" }));
        assert_eq!((dup.status, dup.body["error"].as_str()), (409, Some("email_taken")));
        let begin = post(&s, "/authentication/begin", json!({ "user_id": id }));
        assert_eq!((begin.status, begin.body["error"].as_str()), (409, Some("no_credential")));
        let login = post(
            &s,
            "/login/request",
            json!({ "user_id": id, "service_provider": "sp", "origin_device_descriptor": "d" }),
        );
        assert_eq!(login.status, 409);
        assert_eq!(login.body["layer"], "smartphone");
        let feed = s.handle(Method::Get, &format!("/login/feed/{id}"), None, b"");
        assert_eq!(feed.body, json!([]));
    }

    #[test]
    fn admin_requires_bearer() {
        let s = service();
        let r = s.handle(Method::Get, "/admin/audit", None, b"");
        assert_eq!(r.status, 401);
        let r = s.handle(Method::Get, "/admin/audit", Some("wrong"), b"");
        assert_eq!(r.status, 401);
        let r = s.handle(Method::Get, "/admin/audit", Some("secret"), b"");
        assert_eq!((r.status, r.body.clone()), (200, json!([])));
        let r = s.handle(
            Method::Post,
            "/admin/wipe",
            Some("secret"),
            json!({ "device_id": "dev-x" }).to_string().as_bytes(),
        );
        assert_eq!((r.status, r.body["error"].as_str()), (404, Some("no_such_device")));
    }

    #[test]
    fn face_enroll_sets_reference_and_persists() {
        let dir = tempfile::tempdir().unwrap();
        let s = service().with_persistence(dir.path().to_owned()).unwrap();
        let r = post(&s, "/users", json!({ "email": "f@x.io", "display_name": "F" }));
        let id = r.body["user_id"].as_str().unwrap().to_owned();
        let mut v = vec![0.0; crate::face::EMBEDDING_DIM];
        v[3] = 2.0;
        let r = post(&s, "/face/enroll", json!({ "user_id": id, "vector": v }));
        assert_eq!(r.status, 201, "{:?}", r.body);
        let user = s.rp.user(&UserId::from(id.as_str())).unwrap();
        assert!(user.face_template_ref().is_some());
        let bad = post(&s, "/face/enroll", json!({ "user_id": id, "vector": [1.0] }));
        assert_eq!(bad.status, 400);

        let reloaded = service().with_persistence(dir.path().to_owned()).unwrap();
        assert!(reloaded.rp.user(&UserId::from(id.as_str())).is_some());
        assert!(reloaded.faces.has_template(&UserId::from(id.as_str())));
    }

    #[test]
    fn introspect_unknown_token() {
        let s = service();
        let r = post(&s, "/session/introspect", json!({ "token": crate::encoding::to_b64(&[0; 32]) }));
        assert_eq!(r.body, json!({ "active": false }));
    }
}
