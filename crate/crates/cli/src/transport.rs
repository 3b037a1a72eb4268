//! Two ways to reach a [`Service`]: directly in this process, or over HTTP.

use std::sync::Arc;
use std::time::Duration;

use passgate_core::api::{ApiResponse, Method, Service};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("server at {url} unreachable: {message}")]
    Unreachable { url: String, message: String },
    #[error("malformed response from {url}: {message}")]
    Malformed { url: String, message: String },
}

#[derive(Clone)]
pub enum Transport {
    InProcess(Arc<Service>),
    Http(HttpTransport),
}

impl std::fmt::Debug for Transport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Transport::InProcess(s) => write!(f, "InProcess({})", s.rp.rp_id()),
            Transport::Http(h) => write!(f, "Http({})", h.base_url),
        }
    }
}

impl Transport {
    pub fn http(base_url: &str, timeout: Duration) -> Self {
        Transport::Http(HttpTransport::new(base_url, timeout))
    }

    pub fn call(
        &self,
        method: Method,
        path: &str,
        bearer: Option<&str>,
        body: Option<&Value>,
    ) -> Result<ApiResponse, TransportError> {
        match self {
            Transport::InProcess(service) => {
                let bytes = body.map(|b| b.to_string()).unwrap_or_default();
                Ok(service.handle(method, path, bearer, bytes.as_bytes()))
            }
            Transport::Http(http) => http.call(method, path, bearer, body),
        }
    }
}

#[derive(Clone)]
pub struct HttpTransport {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self {
            base_url: base_url.trim_end_matches('/').to_owned(),
            agent: config.into(),
        }
    }

    fn call(
        &self,
        method: Method,
        path: &str,
        bearer: Option<&str>,
        body: Option<&Value>,
    ) -> Result<ApiResponse, TransportError> {
        let url = format!("{}{}", self.base_url, path);
        let auth = bearer.map(|b| format!("Bearer {b}"));
        let result = match method {
            Method::Get => {
                let mut req = self.agent.get(&url);
                if let Some(a) = &auth {
                    req = req.header("Authorization", a);
                }
                req.call()
            }
            Method::Post => {
                let mut req = self.agent.post(&url).header("Content-Type", "application/json");
                if let Some(a) = &auth {
                    req = req.header("Authorization", a);
                }
                req.send(body.map(|b| b.to_string()).unwrap_or_default())
            }
        };
        let mut response = result.map_err(|e| TransportError::Unreachable {
            url: url.clone(),
            message: e.to_string(),
        })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Malformed {
                url: url.clone(),
                message: e.to_string(),
            })?;
        let body = serde_json::from_str(&text).map_err(|e| TransportError::Malformed {
            url,
            message: format!("{e} in {text:?}"),
        })?;
        Ok(ApiResponse { status, body })
    }
}
