//! HTTP routes.
//!
//! Access decisions are read from the mined snapshot only; vote and pending
//! views come from the provisional snapshot (tip plus mempool).

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use ledgergate_core::crypto::Signature;
use ledgergate_core::ledger::validate_chain;
use ledgergate_core::lifecycle::Reason;
use ledgergate_core::model::{EntityId, verify_transaction_signature, RecordId, RequestId, Transaction, UnsignedTx};
use ledgergate_core::network::{Node, SubmitError};
use ledgergate_core::snapshot::{audit_trail, evaluate, DecisionReason, Outcome};
use ledgergate_core::store::read_blocks;
use ledgergate_core::tx;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::runtime::Shared;
use crate::types::*;

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "MALFORMED", message)
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        let status = match &e {
            SubmitError::Duplicate(_) => StatusCode::CONFLICT,
            SubmitError::UnknownEntity(_) | SubmitError::BadSignature(_) => StatusCode::UNAUTHORIZED,
            SubmitError::Inadmissible(r) => match r.reason {
                Reason::NotKeeper | Reason::BadAuthor => StatusCode::FORBIDDEN,
                Reason::UnknownRecord | Reason::UnknownRequest | Reason::UnknownEntity => StatusCode::NOT_FOUND,
                Reason::Malformed => StatusCode::BAD_REQUEST,
                _ => StatusCode::CONFLICT,
            },
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn reply<T: Serialize>(status: StatusCode, body: T) -> ApiResult {
    Ok((status, Json(body)).into_response())
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::malformed(e.to_string()))
}

fn signature(headers: &HeaderMap) -> Result<Signature, ApiError> {
    let raw = headers
        .get(SIGNATURE_HEADER)
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "BAD_SIGNATURE", "missing X-Signature header"))?;
    raw.to_str()
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "BAD_SIGNATURE", "X-Signature is not hex"))
}

/// Run `f` against the node off the async executor.
async fn on_node<R: Send + 'static>(
    shared: &Arc<Shared>,
    f: impl FnOnce(&Shared) -> R + Send + 'static,
) -> R {
    let s = shared.clone();
    tokio::task::spawn_blocking(move || f(&s)).await.expect("node task panicked")
}

fn submit(shared: &Shared, tx: Transaction) -> Result<(), ApiError> {
    shared.apply(|n| match n.submit(tx) {
        Ok(fx) => (Ok(()), fx),
        Err(e) => (Err(ApiError::from(e)), Default::default()),
    })
}

fn signed(unsigned: UnsignedTx, headers: &HeaderMap) -> Result<Transaction, ApiError> {
    Ok(unsigned.with_signature(signature(headers)?))
}

pub fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/access-requests", post(access_request))
        .route("/pending", get(pending))
        .route("/authorizations", post(authorization))
        .route("/revocations", post(revocation))
        .route("/records", post(create_record))
        .route("/records/{id}", patch(update_record).delete(remove_record).get(record_view))
        .route("/requests/{id}", get(request_view))
        .route("/entities", post(register_entity))
        .route("/audit", get(audit))
        .route("/chain", get(chain))
        .route("/chain/validate", get(chain_validate))
        .route("/status", get(status))
        .with_state(shared)
}

async fn access_request(State(shared): State<Arc<Shared>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let req: AccessRequestBody = parse(&body)?;
    let tx = signed(req.unsigned(), &headers)?;
    on_node(&shared, move |s| {
        let now = s.clock.now();
        s.apply(|n| match decide(n, &tx, &req, now) {
            Err(e) => (Err(e), Default::default()),
            Ok(Some(d)) => (reply(StatusCode::OK, d), Default::default()),
            Ok(None) => match write_request(n, tx, &req, now) {
                Ok((body, fx)) => (reply(StatusCode::ACCEPTED, body), fx),
                Err(e) => (Err(e), Default::default()),
            },
        })
    })
    .await
}

/// Decide from the mined snapshot. `None` means no usable policy exists yet
/// and the request must go to the keepers.
fn decide(n: &Node, tx: &Transaction, req: &AccessRequestBody, now: u64) -> Result<Option<DecisionBody>, ApiError> {
    match verify_transaction_signature(tx, n.snapshot()) {
        Ok(true) => {}
        Ok(false) => return Err(ApiError::new(StatusCode::UNAUTHORIZED, "BAD_SIGNATURE", "signature does not verify")),
        Err(e) => return Err(ApiError::new(StatusCode::UNAUTHORIZED, "UNKNOWN_ENTITY", e.to_string())),
    }
    if n.provisional().record(&req.record).is_none() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_RECORD", req.record.to_string()));
    }
    let d = evaluate(n.snapshot(), &req.party, &req.record, req.level, now);
    match (d.outcome, d.reason) {
        (Outcome::Unknown, DecisionReason::Pending) => Err(ApiError::new(
            StatusCode::CONFLICT,
            "POLICY_EXISTS",
            format!("request {} is pending", d.policy_ref.map(|r| r.to_string()).unwrap_or_default()),
        )),
        // A record created but not yet mined has no policies.
        (Outcome::Unknown, _) | (Outcome::Deny, DecisionReason::UnknownRecord) => Ok(None),
        (outcome, reason) => Ok(Some(DecisionBody {
            outcome,
            reason,
            location: (outcome == Outcome::Grant)
                .then(|| n.snapshot().record(&req.record).map(|r| r.location.clone()))
                .flatten(),
            policy_ref: d.policy_ref,
        })),
    }
}

/// Submit the party's REQUEST and this node's REQUIRE.
fn write_request(
    n: &mut Node,
    request: Transaction,
    req: &AccessRequestBody,
    now: u64,
) -> Result<(PendingRequestBody, ledgergate_core::network::Effects), ApiError> {
    let Some((key, me)) = n.key().cloned().zip(member_id(n)) else {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "NOT_MEMBER",
            "this node has no member key and cannot escalate requests",
        ));
    };
    let require = tx::unsigned_require(me, req.request_id.clone(), now)
        .sign(&key)
        .map_err(|e| ApiError::malformed(e.to_string()))?;
    let mut fx = n.submit(request)?;
    fx.extend(n.submit(require)?);
    let progress = n.provisional().request(&req.request_id).expect("request just admitted");
    let quorum = progress.quorum.as_ref();
    Ok((
        PendingRequestBody {
            request_id: req.request_id.clone(),
            keepers: quorum.map(|q| q.keepers.iter().cloned().collect()).unwrap_or_default(),
            required_grants: quorum.map_or(0, |q| q.required()),
        },
        fx,
    ))
}

/// Member identity of this node's key, if it has one.
fn member_id(n: &Node) -> Option<EntityId> {
    let pk = n.key()?.public();
    n.params().members().iter().find(|e| e.public_key == pk).map(|e| e.id.clone())
}

fn request_status(n: &Node, id: &RequestId) -> Result<RequestStatusBody, ApiError> {
    let progress = n
        .provisional()
        .request(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_REQUEST", id.to_string()))?;
    let mined = n.snapshot().request(id) == Some(progress);
    Ok(RequestStatusBody::of(progress, mined))
}

async fn vote(shared: Arc<Shared>, tx: Transaction, request: RequestId) -> ApiResult {
    on_node(&shared, move |s| {
        submit(s, tx)?;
        reply(StatusCode::OK, s.read(|n| request_status(n, &request))?)
    })
    .await
}

async fn authorization(State(shared): State<Arc<Shared>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let b: AuthorizationBody = parse(&body)?;
    let tx = signed(b.unsigned(), &headers)?;
    vote(shared, tx, b.request_id).await
}

async fn revocation(State(shared): State<Arc<Shared>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let b: RevocationBody = parse(&body)?;
    let tx = signed(b.unsigned(), &headers)?;
    vote(shared, tx, b.request_id).await
}

async fn accepted(shared: Arc<Shared>, tx: Transaction) -> ApiResult {
    let body = Accepted {
        tx_id: tx.tx_id.clone(),
        state_tag: tx.state_tag,
    };
    on_node(&shared, move |s| submit(s, tx)).await?;
    reply(StatusCode::ACCEPTED, body)
}

fn same_record(path: &str, body: &RecordId) -> Result<(), ApiError> {
    if path != body.as_str() {
        return Err(ApiError::malformed(format!("path names {path} but body names {body}")));
    }
    Ok(())
}

async fn create_record(State(shared): State<Arc<Shared>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let b: RecordBody = parse(&body)?;
    let tx = signed(Create(&b).unsigned(), &headers)?;
    accepted(shared, tx).await
}

async fn update_record(
    State(shared): State<Arc<Shared>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let b: RecordBody = parse(&body)?;
    same_record(&id, &b.record_id)?;
    let tx = signed(Update(&b).unsigned(), &headers)?;
    accepted(shared, tx).await
}

async fn remove_record(
    State(shared): State<Arc<Shared>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let b: RemoveBody = parse(&body)?;
    same_record(&id, &b.record_id)?;
    let tx = signed(b.unsigned(), &headers)?;
    accepted(shared, tx).await
}

async fn register_entity(State(shared): State<Arc<Shared>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let b: EntityBody = parse(&body)?;
    let tx = signed(b.unsigned(), &headers)?;
    accepted(shared, tx).await
}

fn query<'a>(q: &'a HashMap<String, String>, name: &str) -> Result<&'a str, ApiError> {
    q.get(name)
        .map(String::as_str)
        .ok_or_else(|| ApiError::malformed(format!("missing query parameter `{name}`")))
}

async fn pending(State(shared): State<Arc<Shared>>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let keeper = query(&q, "keeper")?.parse().map_err(|e: ledgergate_core::model::IdError| ApiError::malformed(e.to_string()))?;
    shared.read(|n| {
        let snap = n.provisional();
        if snap.registration(&keeper).is_none() {
            return Err(ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_ENTITY", keeper.to_string()));
        }
        reply(StatusCode::OK, snap.pending_actions(&keeper))
    })
}

async fn audit(State(shared): State<Arc<Shared>>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let record: RecordId = query(&q, "record")?.parse().map_err(|e: ledgergate_core::model::IdError| ApiError::malformed(e.to_string()))?;
    shared.read(|n| match audit_trail(n.snapshot(), &record) {
        Ok(entries) => reply(StatusCode::OK, entries),
        Err(e) => Err(ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_RECORD", e.0.to_string())),
    })
}

async fn record_view(State(shared): State<Arc<Shared>>, Path(id): Path<String>) -> ApiResult {
    let id: RecordId = id.parse().map_err(|e: ledgergate_core::model::IdError| ApiError::malformed(e.to_string()))?;
    shared.read(|n| {
        let snap = n.snapshot();
        let record = snap
            .record(&id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_RECORD", id.to_string()))?;
        let view = RecordView {
            record: record.clone(),
            requests: snap.requests().filter(|r| r.record == id).cloned().collect(),
        };
        reply(StatusCode::OK, view)
    })
}

async fn request_view(State(shared): State<Arc<Shared>>, Path(id): Path<String>) -> ApiResult {
    let id: RequestId = id.parse().map_err(|e: ledgergate_core::model::IdError| ApiError::malformed(e.to_string()))?;
    reply(StatusCode::OK, shared.read(|n| request_status(n, &id))?)
}

async fn chain(State(shared): State<Arc<Shared>>) -> ApiResult {
    let blocks = shared.read(|n| n.chain().to_vec());
    reply(StatusCode::OK, blocks)
}

/// Re-read and fully validate the persisted chain.
async fn chain_validate(State(shared): State<Arc<Shared>>) -> ApiResult {
    let body = on_node(&shared, |s| {
        let params = s.read(|n| n.params().clone());
        s.with_store(|path| match read_blocks(path) {
            Err(e) => ValidationBody {
                valid: false,
                height: 0,
                first_bad_index: None,
                fault: Some(e.to_string()),
            },
            Ok(blocks) => {
                let height = blocks.len().saturating_sub(1) as u64;
                match validate_chain(&blocks, &params) {
                    Ok(_) => ValidationBody {
                        valid: true,
                        height,
                        first_bad_index: None,
                        fault: None,
                    },
                    Err(f) => ValidationBody {
                        valid: false,
                        height,
                        first_bad_index: Some(f.index),
                        fault: Some(f.fault.code().to_string()),
                    },
                }
            }
        })
    })
    .await;
    reply(StatusCode::OK, body)
}

async fn status(State(shared): State<Arc<Shared>>) -> ApiResult {
    let body = shared.read(|n| StatusBody {
        node: n.name().to_string(),
        entity_id: member_id(n).or_else(|| n.key().map(|k| k.entity_id())),
        miner: n.is_miner(),
        height: n.height(),
        tip: n.tip_block().hash.to_hex(),
        difficulty: n.params().difficulty(),
        mempool: n.mempool().len(),
        peers: n.peers().iter().cloned().collect(),
    });
    reply(StatusCode::OK, body)
}
