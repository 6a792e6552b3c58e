//! Typed HTTP client for the gateway API, with signing done client-side.

use std::time::{Duration, Instant};

use ledgergate_core::crypto::{KeyPair, Signature};
use ledgergate_core::ledger::Block;
use ledgergate_core::model::{EntityId, RecordId, RequestId};
use ledgergate_core::snapshot::{AuditEntry, PendingAction};
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::types::*;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{code}: HTTP {status}: {message}")]
    Api {
        status: u16,
        code: String,
        message: String,
    },
    #[error("IO_FAILURE: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("MALFORMED: could not sign request: {0}")]
    Encode(#[from] ledgergate_core::codec::EncodeError),
    #[error("TIMEOUT: {0}")]
    Timeout(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }

    pub fn code(&self) -> &str {
        match self {
            ClientError::Api { code, .. } => code,
            ClientError::Transport(_) => "IO_FAILURE",
            ClientError::Encode(_) => "MALFORMED",
            ClientError::Timeout(_) => "TIMEOUT",
        }
    }
}

/// Answer to `POST /access-requests`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessResponse {
    Decided(DecisionBody),
    Pending(PendingRequestBody),
}

#[derive(Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    /// Send `body` with an explicit signature header. Returns the status and
    /// decoded body on 2xx.
    pub async fn send<B: Serialize, T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        body: Option<&B>,
        signature: Option<&Signature>,
    ) -> Result<(StatusCode, T), ClientError> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(b);
        }
        if let Some(sig) = signature {
            req = req.header(SIGNATURE_HEADER, sig.to_hex());
        }
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok((status, resp.json().await?));
        }
        let text = resp.text().await.unwrap_or_default();
        let err: ErrorBody = serde_json::from_str(&text).unwrap_or(ErrorBody {
            code: "HTTP_ERROR".into(),
            message: text,
        });
        Err(ClientError::Api {
            status: status.as_u16(),
            code: err.code,
            message: err.message,
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Ok(self.send::<(), T>(Method::GET, path, None, None).await?.1)
    }

    async fn signed<B: Serialize, T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        body: &B,
        sig: Signature,
    ) -> Result<(StatusCode, T), ClientError> {
        self.send(method, path, Some(body), Some(&sig)).await
    }

    pub async fn access_request(&self, body: &AccessRequestBody, key: &KeyPair) -> Result<AccessResponse, ClientError> {
        let (status, v): (_, serde_json::Value) =
            self.signed(Method::POST, "/access-requests", body, body.sign(key)?).await?;
        let parsed = if status == StatusCode::ACCEPTED {
            serde_json::from_value(v).map(AccessResponse::Pending)
        } else {
            serde_json::from_value(v).map(AccessResponse::Decided)
        };
        parsed.map_err(|e| ClientError::Api {
            status: status.as_u16(),
            code: "MALFORMED".into(),
            message: e.to_string(),
        })
    }

    pub async fn authorize(&self, body: &AuthorizationBody, key: &KeyPair) -> Result<RequestStatusBody, ClientError> {
        Ok(self.signed(Method::POST, "/authorizations", body, body.sign(key)?).await?.1)
    }

    pub async fn revoke(&self, body: &RevocationBody, key: &KeyPair) -> Result<RequestStatusBody, ClientError> {
        Ok(self.signed(Method::POST, "/revocations", body, body.sign(key)?).await?.1)
    }

    pub async fn create_record(&self, body: &RecordBody, key: &KeyPair) -> Result<Accepted, ClientError> {
        Ok(self.signed(Method::POST, "/records", body, Create(body).sign(key)?).await?.1)
    }

    pub async fn update_record(&self, body: &RecordBody, key: &KeyPair) -> Result<Accepted, ClientError> {
        let path = format!("/records/{}", body.record_id);
        Ok(self.signed(Method::PATCH, &path, body, Update(body).sign(key)?).await?.1)
    }

    pub async fn remove_record(&self, body: &RemoveBody, key: &KeyPair) -> Result<Accepted, ClientError> {
        let path = format!("/records/{}", body.record_id);
        Ok(self.signed(Method::DELETE, &path, body, body.sign(key)?).await?.1)
    }

    pub async fn register(&self, body: &EntityBody, key: &KeyPair) -> Result<Accepted, ClientError> {
        Ok(self.signed(Method::POST, "/entities", body, body.sign(key)?).await?.1)
    }

    pub async fn pending(&self, keeper: &EntityId) -> Result<Vec<PendingAction>, ClientError> {
        self.get(&format!("/pending?keeper={keeper}")).await
    }

    pub async fn audit(&self, record: &RecordId) -> Result<Vec<AuditEntry>, ClientError> {
        self.get(&format!("/audit?record={record}")).await
    }

    pub async fn record(&self, record: &RecordId) -> Result<RecordView, ClientError> {
        self.get(&format!("/records/{record}")).await
    }

    pub async fn request(&self, request: &RequestId) -> Result<RequestStatusBody, ClientError> {
        self.get(&format!("/requests/{request}")).await
    }

    pub async fn chain(&self) -> Result<Vec<Block>, ClientError> {
        self.get("/chain").await
    }

    pub async fn validate(&self) -> Result<ValidationBody, ClientError> {
        self.get("/chain/validate").await
    }

    pub async fn status(&self) -> Result<StatusBody, ClientError> {
        self.get("/status").await
    }

    /// Poll `/status` until `done` holds.
    pub async fn wait_for(
        &self,
        what: &str,
        timeout: Duration,
        mut done: impl FnMut(&StatusBody) -> bool,
    ) -> Result<StatusBody, ClientError> {
        let deadline = Instant::now() + timeout;
        loop {
            let s = self.status().await?;
            if done(&s) {
                return Ok(s);
            }
            if Instant::now() > deadline {
                return Err(ClientError::Timeout(format!("{what} after {timeout:?} (last: {s:?})")));
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
    }

    /// Wait until the mempool has drained into mined blocks.
    pub async fn wait_mined(&self, timeout: Duration) -> Result<StatusBody, ClientError> {
        self.wait_for("mempool drain", timeout, |s| s.mempool == 0).await
    }
}
