//! Constructors for each transaction an entity can author.
//!
//! Id conventions: `REQUEST` and `REQUIRE` carry the request id as their
//! transaction id, and a keeper's grant/deny and later revoke share the id of
//! that keeper's vote slot. The same logical transaction therefore keeps one
//! id across its states, and the per-block id rule keeps two states of it out
//! of the same block.

use sha2::{Digest as _, Sha256};

use crate::codec::EncodeError;
use crate::crypto::KeyPair;
use crate::model::{
    AccessRequest, AgreementRule, Entity, EntityId, Payload, PermissionLevel, RecordDescriptor,
    RecordId, RequestId, StateTag, Transaction, TxId, TxKind, UnsignedTx,
};

/// Transaction id of `keeper`'s vote slot on `request`.
pub fn vote_slot_id(request: &RequestId, keeper: &EntityId) -> TxId {
    let mut h = Sha256::new();
    h.update(request.as_str().as_bytes());
    h.update([0u8]);
    h.update(keeper.as_str().as_bytes());
    let hex = hex::encode(h.finalize());
    TxId::new(format!("v-{}", &hex[..32])).expect("hex is a valid identifier")
}

pub fn request_tx_id(request: &RequestId) -> TxId {
    TxId::new(request.as_str()).expect("request ids are valid transaction ids")
}

pub fn unsigned_record(
    tx_id: TxId,
    tag: StateTag,
    author: EntityId,
    descriptor: RecordDescriptor,
    timestamp: u64,
) -> UnsignedTx {
    UnsignedTx {
        tx_id,
        kind: TxKind::RecordOp,
        state_tag: tag,
        payload: Payload::Record(descriptor),
        author,
        timestamp,
    }
}

pub fn unsigned_remove(tx_id: TxId, author: EntityId, record: RecordId, timestamp: u64) -> UnsignedTx {
    UnsignedTx {
        tx_id,
        kind: TxKind::RecordOp,
        state_tag: StateTag::Remove,
        payload: Payload::RecordRef { record_id: record },
        author,
        timestamp,
    }
}

pub fn unsigned_register(tx_id: TxId, author: EntityId, entity: Entity, timestamp: u64) -> UnsignedTx {
    UnsignedTx {
        tx_id,
        kind: TxKind::RecordOp,
        state_tag: StateTag::Register,
        payload: Payload::Registration(entity),
        author,
        timestamp,
    }
}

pub fn unsigned_request(request: AccessRequest, timestamp: u64) -> UnsignedTx {
    UnsignedTx {
        tx_id: request_tx_id(&request.request_id),
        kind: TxKind::PolicyOp,
        state_tag: StateTag::Request,
        author: request.party.clone(),
        payload: Payload::Access(request),
        timestamp,
    }
}

pub fn unsigned_require(node: EntityId, request: RequestId, timestamp: u64) -> UnsignedTx {
    UnsignedTx {
        tx_id: request_tx_id(&request),
        kind: TxKind::PolicyOp,
        state_tag: StateTag::Require,
        payload: Payload::RequestRef { request_id: request },
        author: node,
        timestamp,
    }
}

/// Keeper decision: `AUTH_GRANT`, `AUTH_DENY` or `AUTH_REVOKE`.
pub fn unsigned_vote(keeper: EntityId, request: RequestId, tag: StateTag, timestamp: u64) -> UnsignedTx {
    UnsignedTx {
        tx_id: vote_slot_id(&request, &keeper),
        kind: TxKind::IndividualAuth,
        state_tag: tag,
        payload: Payload::RequestRef { request_id: request },
        author: keeper,
        timestamp,
    }
}

/// Signing helpers keyed by the author's key pair; the author id is the
/// caller's responsibility when it is not derived from the key.
pub struct Signer<'a> {
    pub key: &'a KeyPair,
    pub id: EntityId,
}

impl<'a> Signer<'a> {
    pub fn new(key: &'a KeyPair, id: EntityId) -> Self {
        Signer { key, id }
    }

    pub fn create_record(
        &self,
        tx_id: TxId,
        record: RecordId,
        keepers: Vec<EntityId>,
        agreement: AgreementRule,
        location: &str,
        timestamp: u64,
    ) -> Result<Transaction, EncodeError> {
        let d = RecordDescriptor {
            record_id: record,
            keepers,
            agreement,
            location: location.to_string(),
        };
        unsigned_record(tx_id, StateTag::Create, self.id.clone(), d, timestamp).sign(self.key)
    }

    pub fn update_record(
        &self,
        tx_id: TxId,
        record: RecordId,
        keepers: Vec<EntityId>,
        agreement: AgreementRule,
        location: &str,
        timestamp: u64,
    ) -> Result<Transaction, EncodeError> {
        let d = RecordDescriptor {
            record_id: record,
            keepers,
            agreement,
            location: location.to_string(),
        };
        unsigned_record(tx_id, StateTag::Update, self.id.clone(), d, timestamp).sign(self.key)
    }

    pub fn remove_record(&self, tx_id: TxId, record: RecordId, timestamp: u64) -> Result<Transaction, EncodeError> {
        unsigned_remove(tx_id, self.id.clone(), record, timestamp).sign(self.key)
    }

    pub fn register(&self, tx_id: TxId, entity: Entity, timestamp: u64) -> Result<Transaction, EncodeError> {
        unsigned_register(tx_id, self.id.clone(), entity, timestamp).sign(self.key)
    }

    pub fn request(
        &self,
        request: RequestId,
        record: RecordId,
        level: PermissionLevel,
        expiry: Option<u64>,
        timestamp: u64,
    ) -> Result<Transaction, EncodeError> {
        let req = AccessRequest {
            request_id: request,
            party: self.id.clone(),
            record,
            level,
            expiry,
        };
        unsigned_request(req, timestamp).sign(self.key)
    }

    pub fn require(&self, request: RequestId, timestamp: u64) -> Result<Transaction, EncodeError> {
        unsigned_require(self.id.clone(), request, timestamp).sign(self.key)
    }

    pub fn vote(&self, request: RequestId, tag: StateTag, timestamp: u64) -> Result<Transaction, EncodeError> {
        unsigned_vote(self.id.clone(), request, tag, timestamp).sign(self.key)
    }
}
