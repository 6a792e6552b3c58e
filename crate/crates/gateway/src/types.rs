//! JSON bodies of the HTTP API.
//!
//! Every mutating request is authenticated by a detached signature in the
//! `X-Signature` header: hex of the author's signature over the canonical
//! signing preimage of the transaction the body describes. The gateway
//! rebuilds that transaction from the body, attaches the signature and
//! submits it, so the signed transaction on chain is exactly what the
//! author signed.

use ledgergate_core::codec::EncodeError;
use ledgergate_core::crypto::{KeyPair, Signature};
use ledgergate_core::lifecycle::{RequestProgress, RequestState};
use ledgergate_core::model::{
    AccessRequest, AgreementRule, Entity, EntityId, PermissionLevel, Record, RecordDescriptor, RecordId,
    RequestId, StateTag, TxId, UnsignedTx,
};
use ledgergate_core::snapshot::{DecisionReason, Outcome};
use ledgergate_core::tx;
use serde::{Deserialize, Serialize};

pub const SIGNATURE_HEADER: &str = "x-signature";

/// A body that describes exactly one transaction.
pub trait Signable {
    fn unsigned(&self) -> UnsignedTx;

    fn sign(&self, key: &KeyPair) -> Result<Signature, EncodeError> {
        Ok(key.sign(&self.unsigned().preimage()?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AccessRequestBody {
    pub request_id: RequestId,
    pub party: EntityId,
    pub record: RecordId,
    pub level: PermissionLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expiry: Option<u64>,
    pub timestamp: u64,
}

impl Signable for AccessRequestBody {
    fn unsigned(&self) -> UnsignedTx {
        tx::unsigned_request(
            AccessRequest {
                request_id: self.request_id.clone(),
                party: self.party.clone(),
                record: self.record.clone(),
                level: self.level,
                expiry: self.expiry,
            },
            self.timestamp,
        )
    }
}

/// `200` answer to an access request decided from existing policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecisionBody {
    pub outcome: Outcome,
    pub reason: DecisionReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_ref: Option<RequestId>,
    /// Off-chain location of the record, on GRANT only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

/// `202` answer: a new request is waiting for keeper votes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PendingRequestBody {
    pub request_id: RequestId,
    pub keepers: Vec<EntityId>,
    pub required_grants: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Grant,
    Deny,
}

impl Verdict {
    pub fn tag(self) -> StateTag {
        match self {
            Verdict::Grant => StateTag::AuthGrant,
            Verdict::Deny => StateTag::AuthDeny,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AuthorizationBody {
    pub request_id: RequestId,
    pub keeper: EntityId,
    pub verdict: Verdict,
    pub timestamp: u64,
}

impl Signable for AuthorizationBody {
    fn unsigned(&self) -> UnsignedTx {
        tx::unsigned_vote(self.keeper.clone(), self.request_id.clone(), self.verdict.tag(), self.timestamp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RevocationBody {
    pub request_id: RequestId,
    pub keeper: EntityId,
    pub timestamp: u64,
}

impl Signable for RevocationBody {
    fn unsigned(&self) -> UnsignedTx {
        tx::unsigned_vote(self.keeper.clone(), self.request_id.clone(), StateTag::AuthRevoke, self.timestamp)
    }
}

/// Aggregate status of a request, as seen after the submitted vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Pending,
    Granted,
    Denied,
    Revoked,
}

impl From<RequestState> for Status {
    fn from(s: RequestState) -> Self {
        match s {
            RequestState::Requested | RequestState::WaitingAuthCheck => Status::Pending,
            RequestState::Granted => Status::Granted,
            RequestState::Denied => Status::Denied,
            RequestState::Revoked => Status::Revoked,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RequestStatusBody {
    pub request_id: RequestId,
    /// Status including pending (unmined) transactions.
    pub status: Status,
    pub live_grants: usize,
    pub required_grants: usize,
    /// Whether this status is already backed by mined blocks.
    pub mined: bool,
}

impl RequestStatusBody {
    pub fn of(progress: &RequestProgress, mined: bool) -> Self {
        RequestStatusBody {
            request_id: progress.request_id.clone(),
            status: progress.state.into(),
            live_grants: ledgergate_core::snapshot::live_grants(progress),
            required_grants: progress.quorum.as_ref().map_or(0, |q| q.required()),
            mined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RecordBody {
    pub tx_id: TxId,
    pub author: EntityId,
    pub record_id: RecordId,
    pub keepers: Vec<EntityId>,
    pub agreement: AgreementRule,
    pub location: String,
    pub timestamp: u64,
}

impl RecordBody {
    fn descriptor(&self) -> RecordDescriptor {
        RecordDescriptor {
            record_id: self.record_id.clone(),
            keepers: self.keepers.clone(),
            agreement: self.agreement,
            location: self.location.clone(),
        }
    }

    pub fn unsigned_with(&self, tag: StateTag) -> UnsignedTx {
        tx::unsigned_record(self.tx_id.clone(), tag, self.author.clone(), self.descriptor(), self.timestamp)
    }
}

/// `POST /records` signs a CREATE, `PATCH /records/{id}` an UPDATE.
pub struct Create<'a>(pub &'a RecordBody);
pub struct Update<'a>(pub &'a RecordBody);

impl Signable for Create<'_> {
    fn unsigned(&self) -> UnsignedTx {
        self.0.unsigned_with(StateTag::Create)
    }
}

impl Signable for Update<'_> {
    fn unsigned(&self) -> UnsignedTx {
        self.0.unsigned_with(StateTag::Update)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RemoveBody {
    pub tx_id: TxId,
    pub author: EntityId,
    pub record_id: RecordId,
    pub timestamp: u64,
}

impl Signable for RemoveBody {
    fn unsigned(&self) -> UnsignedTx {
        tx::unsigned_remove(self.tx_id.clone(), self.author.clone(), self.record_id.clone(), self.timestamp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EntityBody {
    pub tx_id: TxId,
    pub author: EntityId,
    pub entity: Entity,
    pub timestamp: u64,
}

impl Signable for EntityBody {
    fn unsigned(&self) -> UnsignedTx {
        tx::unsigned_register(self.tx_id.clone(), self.author.clone(), self.entity.clone(), self.timestamp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Accepted {
    pub tx_id: TxId,
    pub state_tag: StateTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecordView {
    pub record: Record,
    /// Every request on the record, mined state.
    pub requests: Vec<RequestProgress>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidationBody {
    pub valid: bool,
    pub height: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_bad_index: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StatusBody {
    pub node: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_id: Option<EntityId>,
    pub miner: bool,
    pub height: u64,
    pub tip: String,
    pub difficulty: u32,
    pub mempool: usize,
    pub peers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}
