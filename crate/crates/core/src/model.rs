//! Domain types shared across the crate.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{canonical_encode, Canon, Canonical, EncodeError};
use crate::crypto::{PublicKey, Signature};

pub const MAX_ID_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdError {
    #[error("identifier must be 1..={MAX_ID_LEN} characters, got {0}")]
    Length(usize),
    #[error("identifier contains a character outside [A-Za-z0-9._~-]: {0:?}")]
    Charset(String),
}

fn check_id(s: &str) -> Result<(), IdError> {
    if s.is_empty() || s.len() > MAX_ID_LEN {
        return Err(IdError::Length(s.len()));
    }
    if !s
        .bytes()
        .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b'~'))
    {
        return Err(IdError::Charset(s.to_string()));
    }
    Ok(())
}

macro_rules! identifier {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Result<Self, IdError> {
                let s = s.into();
                check_id(&s)?;
                Ok(Self(s))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = IdError;
            fn try_from(s: String) -> Result<Self, IdError> {
                Self::new(s)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl FromStr for $name {
            type Err = IdError;
            fn from_str(s: &str) -> Result<Self, IdError> {
                Self::new(s)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.0)
            }
        }
    };
}

identifier!(
    /// Registered participant: keeper, third party or consortium node.
    EntityId
);
identifier!(RecordId);
identifier!(RequestId);
identifier!(
    /// Names one logical transaction across its states.
    TxId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    DataKeeper,
    ThirdParty,
    ConsortiumNode,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::DataKeeper => "DATA_KEEPER",
            Role::ThirdParty => "THIRD_PARTY",
            Role::ConsortiumNode => "CONSORTIUM_NODE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Entity {
    pub id: EntityId,
    pub role: Role,
    pub public_key: PublicKey,
}

impl Canonical for Entity {
    fn canon(&self) -> Canon {
        Canon::obj([
            ("id", Canon::str(self.id.as_str())),
            ("publicKey", Canon::bytes(&self.public_key.0)),
            ("role", Canon::str(self.role.label())),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PermissionLevel {
    None,
    Read,
    Write,
}

impl PermissionLevel {
    pub fn label(self) -> &'static str {
        match self {
            PermissionLevel::None => "NONE",
            PermissionLevel::Read => "READ",
            PermissionLevel::Write => "WRITE",
        }
    }
}

/// Quorum of keeper grants needed before access is allowed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgreementRule {
    Any,
    Majority,
    All,
}

impl AgreementRule {
    pub fn required_grants(self, keepers: usize) -> usize {
        match self {
            AgreementRule::Any => 1,
            AgreementRule::Majority => keepers / 2 + 1,
            AgreementRule::All => keepers,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgreementRule::Any => "ANY",
            AgreementRule::Majority => "MAJORITY",
            AgreementRule::All => "ALL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordStatus {
    Active,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Record {
    pub id: RecordId,
    pub keepers: BTreeSet<EntityId>,
    pub agreement: AgreementRule,
    pub location: String,
    pub status: RecordStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicyStatus {
    Pending,
    Granted,
    Denied,
    Revoked,
}

/// Relation between exactly one third party and one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Policy {
    pub request_id: RequestId,
    pub party: EntityId,
    pub record: RecordId,
    pub level: PermissionLevel,
    pub status: PolicyStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expiry: Option<u64>,
}

impl Policy {
    pub fn is_live(&self, now: u64) -> bool {
        self.status == PolicyStatus::Granted && self.expiry.is_none_or(|e| e > now)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxKind {
    RecordOp,
    PolicyOp,
    IndividualAuth,
}

impl TxKind {
    pub fn label(self) -> &'static str {
        match self {
            TxKind::RecordOp => "RECORD_OP",
            TxKind::PolicyOp => "POLICY_OP",
            TxKind::IndividualAuth => "INDIVIDUAL_AUTH",
        }
    }
}

/// Every transition label that may appear on a transaction. Which labels are
/// legal for which kind is decided in [`crate::lifecycle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StateTag {
    Create,
    Update,
    Remove,
    Register,
    Request,
    Require,
    RequireAction,
    AuthGrant,
    AuthDeny,
    AuthRevoke,
}

impl StateTag {
    pub fn label(self) -> &'static str {
        match self {
            StateTag::Create => "CREATE",
            StateTag::Update => "UPDATE",
            StateTag::Remove => "REMOVE",
            StateTag::Register => "REGISTER",
            StateTag::Request => "REQUEST",
            StateTag::Require => "REQUIRE",
            StateTag::RequireAction => "REQUIRE_ACTION",
            StateTag::AuthGrant => "AUTH_GRANT",
            StateTag::AuthDeny => "AUTH_DENY",
            StateTag::AuthRevoke => "AUTH_REVOKE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RecordDescriptor {
    pub record_id: RecordId,
    pub keepers: Vec<EntityId>,
    pub agreement: AgreementRule,
    pub location: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AccessRequest {
    pub request_id: RequestId,
    pub party: EntityId,
    pub record: RecordId,
    pub level: PermissionLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expiry: Option<u64>,
}

/// Kind-specific transaction body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Record(RecordDescriptor),
    Access(AccessRequest),
    Registration(Entity),
    RecordRef {
        #[serde(rename = "recordId")]
        record_id: RecordId,
    },
    RequestRef {
        #[serde(rename = "requestId")]
        request_id: RequestId,
    },
}

impl Payload {
    /// Record this payload touches directly, if any.
    pub fn record_id(&self) -> Option<&RecordId> {
        match self {
            Payload::Record(d) => Some(&d.record_id),
            Payload::RecordRef { record_id } => Some(record_id),
            Payload::Access(a) => Some(&a.record),
            _ => None,
        }
    }

    pub fn request_id(&self) -> Option<&RequestId> {
        match self {
            Payload::Access(a) => Some(&a.request_id),
            Payload::RequestRef { request_id } => Some(request_id),
            _ => None,
        }
    }
}

impl Canonical for Payload {
    fn canon(&self) -> Canon {
        match self {
            Payload::Record(d) => Canon::obj([
                ("agreement", Canon::str(d.agreement.label())),
                (
                    "keepers",
                    Canon::Arr(d.keepers.iter().map(|k| Canon::str(k.as_str())).collect()),
                ),
                ("location", Canon::str(d.location.as_str())),
                ("recordId", Canon::str(d.record_id.as_str())),
            ]),
            Payload::Access(a) => {
                let mut c = Canon::obj([
                    ("level", Canon::str(a.level.label())),
                    ("party", Canon::str(a.party.as_str())),
                    ("record", Canon::str(a.record.as_str())),
                    ("requestId", Canon::str(a.request_id.as_str())),
                ]);
                if let (Canon::Obj(m), Some(exp)) = (&mut c, a.expiry) {
                    m.insert("expiry", Canon::Int(exp));
                }
                c
            }
            Payload::Registration(e) => e.canon(),
            Payload::RecordRef { record_id } => {
                Canon::obj([("recordId", Canon::str(record_id.as_str()))])
            }
            Payload::RequestRef { request_id } => {
                Canon::obj([("requestId", Canon::str(request_id.as_str()))])
            }
        }
    }
}

/// A signed state-machine transition authored by one entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transaction {
    pub tx_id: TxId,
    pub kind: TxKind,
    pub state_tag: StateTag,
    pub payload: Payload,
    pub author: EntityId,
    pub timestamp: u64,
    pub signature: Signature,
}

/// A transaction before signing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnsignedTx {
    pub tx_id: TxId,
    pub kind: TxKind,
    pub state_tag: StateTag,
    pub payload: Payload,
    pub author: EntityId,
    pub timestamp: u64,
}

/// Bytes covered by a transaction signature: payload, state tag, timestamp
/// and transaction id.
pub fn signing_preimage(
    tx_id: &TxId,
    state_tag: StateTag,
    payload: &Payload,
    timestamp: u64,
) -> Result<Vec<u8>, EncodeError> {
    canonical_encode(&SigningView {
        tx_id,
        state_tag,
        payload,
        timestamp,
    })
}

struct SigningView<'a> {
    tx_id: &'a TxId,
    state_tag: StateTag,
    payload: &'a Payload,
    timestamp: u64,
}

impl Canonical for SigningView<'_> {
    fn canon(&self) -> Canon {
        Canon::obj([
            ("payload", self.payload.canon()),
            ("stateTag", Canon::str(self.state_tag.label())),
            ("timestamp", Canon::Int(self.timestamp)),
            ("txId", Canon::str(self.tx_id.as_str())),
        ])
    }
}

impl UnsignedTx {
    pub fn preimage(&self) -> Result<Vec<u8>, EncodeError> {
        signing_preimage(&self.tx_id, self.state_tag, &self.payload, self.timestamp)
    }

    pub fn sign(self, key: &crate::crypto::KeyPair) -> Result<Transaction, EncodeError> {
        let signature = key.sign(&self.preimage()?);
        Ok(self.with_signature(signature))
    }

    pub fn with_signature(self, signature: Signature) -> Transaction {
        Transaction {
            tx_id: self.tx_id,
            kind: self.kind,
            state_tag: self.state_tag,
            payload: self.payload,
            author: self.author,
            timestamp: self.timestamp,
            signature,
        }
    }
}

impl Transaction {
    pub fn key(&self) -> TxKey {
        (self.tx_id.clone(), self.state_tag)
    }

    pub fn preimage(&self) -> Result<Vec<u8>, EncodeError> {
        signing_preimage(&self.tx_id, self.state_tag, &self.payload, self.timestamp)
    }

    pub fn verify_with(&self, key: &PublicKey) -> bool {
        match self.preimage() {
            Ok(bytes) => key.verify(&bytes, &self.signature),
            Err(_) => false,
        }
    }
}

/// Uniqueness key of a transaction on the chain.
pub type TxKey = (TxId, StateTag);

impl Canonical for Transaction {
    fn canon(&self) -> Canon {
        Canon::obj([
            ("author", Canon::str(self.author.as_str())),
            ("kind", Canon::str(self.kind.label())),
            ("payload", self.payload.canon()),
            ("signature", Canon::bytes(&self.signature.0)),
            ("stateTag", Canon::str(self.state_tag.label())),
            ("timestamp", Canon::Int(self.timestamp)),
            ("txId", Canon::str(self.tx_id.as_str())),
        ])
    }
}

/// Lookup of registered entities and their keys.
pub trait EntityDirectory {
    fn entity(&self, id: &EntityId) -> Option<&Entity>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("UNKNOWN_ENTITY: {0} is not registered")]
    UnknownEntity(EntityId),
}

pub fn verify_transaction_signature(
    tx: &Transaction,
    registry: &impl EntityDirectory,
) -> Result<bool, VerifyError> {
    let entity = registry
        .entity(&tx.author)
        .ok_or_else(|| VerifyError::UnknownEntity(tx.author.clone()))?;
    Ok(tx.verify_with(&entity.public_key))
}
