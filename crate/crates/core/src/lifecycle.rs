//! Transaction admissibility: the record lifecycle, the access-policy
//! machine and the per-keeper authorization machine, expressed as rules over
//! the current [`Snapshot`].
//!
//! Only `REQUEST` and `REQUIRE` policy transitions are written on chain. The
//! aggregate grant, deny and revoke transitions of a request are derived
//! from keeper votes whenever a vote or revocation is applied.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AccessRequest, AgreementRule, Entity, EntityDirectory, EntityId, PermissionLevel, Payload, Record,
    RecordDescriptor, RecordId, RecordStatus, RequestId, Role, StateTag, Transaction, TxKind,
};
use crate::snapshot::Snapshot;

/// Stable, machine-readable rejection codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    RecordTerminal,
    DuplicateVote,
    NotKeeper,
    PolicyExists,
    RevokeWithoutGrant,
    BadAuthor,
    UnknownRecord,
    UnknownRequest,
    UnknownEntity,
    RequestTerminal,
    RecordExists,
    EntityExists,
    IllegalTransition,
    DuplicateTx,
    Malformed,
}

impl Reason {
    pub fn code(self) -> &'static str {
        match self {
            Reason::RecordTerminal => "RECORD_TERMINAL",
            Reason::DuplicateVote => "DUPLICATE_VOTE",
            Reason::NotKeeper => "NOT_KEEPER",
            Reason::PolicyExists => "POLICY_EXISTS",
            Reason::RevokeWithoutGrant => "REVOKE_WITHOUT_GRANT",
            Reason::BadAuthor => "BAD_AUTHOR",
            Reason::UnknownRecord => "UNKNOWN_RECORD",
            Reason::UnknownRequest => "UNKNOWN_REQUEST",
            Reason::UnknownEntity => "UNKNOWN_ENTITY",
            Reason::RequestTerminal => "REQUEST_TERMINAL",
            Reason::RecordExists => "RECORD_EXISTS",
            Reason::EntityExists => "ENTITY_EXISTS",
            Reason::IllegalTransition => "ILLEGAL_TRANSITION",
            Reason::DuplicateTx => "DUPLICATE_TX",
            Reason::Malformed => "MALFORMED",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{reason}: {detail}")]
pub struct Rejection {
    pub reason: Reason,
    pub detail: String,
}

fn reject<T>(reason: Reason, detail: impl Into<String>) -> Result<T, Rejection> {
    Err(Rejection {
        reason,
        detail: detail.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecordStateTag {
    Create,
    Update,
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyStateTag {
    Request,
    Require,
    AuthGrant,
    AuthDeny,
    AuthRevoke,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IndividualAuthStateTag {
    RequireAction,
    AuthGrant,
    AuthDeny,
    AuthRevoke,
}

/// A transaction's label resolved against its kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Record(RecordStateTag),
    Register,
    Policy(PolicyStateTag),
    Individual(IndividualAuthStateTag),
}

impl Transition {
    /// Resolve `(kind, tag)`; `None` when the label does not belong to the kind.
    pub fn classify(kind: TxKind, tag: StateTag) -> Option<Self> {
        use StateTag as S;
        Some(match (kind, tag) {
            (TxKind::RecordOp, S::Create) => Transition::Record(RecordStateTag::Create),
            (TxKind::RecordOp, S::Update) => Transition::Record(RecordStateTag::Update),
            (TxKind::RecordOp, S::Remove) => Transition::Record(RecordStateTag::Remove),
            (TxKind::RecordOp, S::Register) => Transition::Register,
            (TxKind::PolicyOp, S::Request) => Transition::Policy(PolicyStateTag::Request),
            (TxKind::PolicyOp, S::Require) => Transition::Policy(PolicyStateTag::Require),
            (TxKind::PolicyOp, S::AuthGrant) => Transition::Policy(PolicyStateTag::AuthGrant),
            (TxKind::PolicyOp, S::AuthDeny) => Transition::Policy(PolicyStateTag::AuthDeny),
            (TxKind::PolicyOp, S::AuthRevoke) => Transition::Policy(PolicyStateTag::AuthRevoke),
            (TxKind::IndividualAuth, S::RequireAction) => {
                Transition::Individual(IndividualAuthStateTag::RequireAction)
            }
            (TxKind::IndividualAuth, S::AuthGrant) => {
                Transition::Individual(IndividualAuthStateTag::AuthGrant)
            }
            (TxKind::IndividualAuth, S::AuthDeny) => {
                Transition::Individual(IndividualAuthStateTag::AuthDeny)
            }
            (TxKind::IndividualAuth, S::AuthRevoke) => {
                Transition::Individual(IndividualAuthStateTag::AuthRevoke)
            }
            _ => return None,
        })
    }
}

/// Structural check: the tag belongs to the kind and the payload has the
/// shape that tag requires.
pub fn well_formed(tx: &Transaction) -> Result<Transition, Rejection> {
    let Some(t) = Transition::classify(tx.kind, tx.state_tag) else {
        return reject(
            Reason::Malformed,
            format!("{} is not a {} label", tx.state_tag.label(), tx.kind.label()),
        );
    };
    let shape_ok = match (t, &tx.payload) {
        (Transition::Record(RecordStateTag::Create | RecordStateTag::Update), Payload::Record(_)) => {
            true
        }
        (Transition::Record(RecordStateTag::Remove), Payload::RecordRef { .. }) => true,
        (Transition::Register, Payload::Registration(_)) => true,
        (Transition::Policy(PolicyStateTag::Request), Payload::Access(_)) => true,
        (Transition::Policy(p), Payload::RequestRef { .. }) => p != PolicyStateTag::Request,
        (Transition::Individual(_), Payload::RequestRef { .. }) => true,
        _ => false,
    };
    if !shape_ok {
        return reject(
            Reason::Malformed,
            format!("payload shape does not match {}", tx.state_tag.label()),
        );
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Vote {
    Grant,
    Deny,
    RevokedGrant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RequestState {
    Requested,
    WaitingAuthCheck,
    Granted,
    Denied,
    Revoked,
}

impl RequestState {
    pub fn is_terminal(self) -> bool {
        matches!(self, RequestState::Denied | RequestState::Revoked)
    }

    pub fn is_open(self) -> bool {
        matches!(self, RequestState::Requested | RequestState::WaitingAuthCheck)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Aggregate {
    Pending,
    Granted,
    Denied,
}

/// Keeper set and agreement rule a request is decided under. Captured when
/// the request enters `WAITING_AUTH_CHECK`, so later record updates do not
/// change the electorate of an open request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Quorum {
    pub keepers: BTreeSet<EntityId>,
    pub rule: AgreementRule,
}

impl Quorum {
    pub fn of(record: &Record) -> Self {
        Quorum {
            keepers: record.keepers.clone(),
            rule: record.agreement,
        }
    }

    pub fn required(&self) -> usize {
        self.rule.required_grants(self.keepers.len())
    }
}

pub type Votes = BTreeMap<EntityId, Vote>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RequestProgress {
    pub request_id: RequestId,
    pub party: EntityId,
    pub record: RecordId,
    pub level: PermissionLevel,
    pub expiry: Option<u64>,
    pub state: RequestState,
    pub votes: Votes,
    pub quorum: Option<Quorum>,
    pub requested_at: u64,
    pub required_at: Option<u64>,
}

fn count(votes: &Votes, which: Vote) -> usize {
    votes.values().filter(|v| **v == which).count()
}

/// Grant threshold reached, still reachable, or out of reach.
///
/// A keeper whose grant was revoked cannot vote again, so revoked grants
/// count against reachability the same way denials do.
pub fn aggregate_decision(quorum: &Quorum, votes: &Votes) -> Aggregate {
    let n = quorum.keepers.len();
    let required = quorum.required();
    let grants = count(votes, Vote::Grant);
    let closed = count(votes, Vote::Deny) + count(votes, Vote::RevokedGrant);
    if grants >= required {
        Aggregate::Granted
    } else if closed > n - required {
        Aggregate::Denied
    } else {
        Aggregate::Pending
    }
}

/// Withdraw `keeper`'s grant and recompute the request state.
pub fn apply_revocation(
    quorum: &Quorum,
    votes: &Votes,
    state: RequestState,
    keeper: &EntityId,
) -> Result<(Votes, RequestState), Reason> {
    if votes.get(keeper) != Some(&Vote::Grant) {
        return Err(Reason::RevokeWithoutGrant);
    }
    let mut next = votes.clone();
    next.insert(keeper.clone(), Vote::RevokedGrant);
    let live = count(&next, Vote::Grant);
    let new_state = match state {
        RequestState::Granted if live >= quorum.required() => RequestState::Granted,
        RequestState::Granted => RequestState::Revoked,
        _ => match aggregate_decision(quorum, &next) {
            Aggregate::Denied => RequestState::Denied,
            _ => state,
        },
    };
    Ok((next, new_state))
}

/// Record a first-time grant or deny and recompute the request state.
pub fn apply_vote(
    quorum: &Quorum,
    votes: &Votes,
    state: RequestState,
    keeper: &EntityId,
    vote: Vote,
) -> Result<(Votes, RequestState), Reason> {
    if votes.contains_key(keeper) {
        return Err(Reason::DuplicateVote);
    }
    let mut next = votes.clone();
    next.insert(keeper.clone(), vote);
    let new_state = match state {
        RequestState::WaitingAuthCheck => match aggregate_decision(quorum, &next) {
            Aggregate::Granted => RequestState::Granted,
            Aggregate::Denied => RequestState::Denied,
            Aggregate::Pending => RequestState::WaitingAuthCheck,
        },
        other => other,
    };
    Ok((next, new_state))
}

/// State change a transaction causes once admitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    PutRecord(Record),
    RemoveRecord(RecordId),
    Register(Entity),
    OpenRequest(RequestProgress),
    Require {
        request: RequestId,
        quorum: Quorum,
        at: u64,
    },
    Decide {
        request: RequestId,
        votes: Votes,
        state: RequestState,
    },
}

/// Whether `tx` is a legal transition on top of `snap` when placed in block
/// `block_index`. The signature is assumed to be verified already.
pub fn admissible(tx: &Transaction, snap: &Snapshot, block_index: u64) -> Result<(), Rejection> {
    plan(tx, snap, block_index).map(|_| ())
}

/// Admissibility check that also returns the resulting state change.
///
/// The `(txId, stateTag)` uniqueness check comes last so that a replayed
/// vote or record operation reports the lifecycle rule it breaks.
pub fn plan(tx: &Transaction, snap: &Snapshot, block_index: u64) -> Result<Effect, Rejection> {
    let effect = plan_transition(tx, snap, block_index)?;
    if snap.contains_tx(&tx.tx_id, tx.state_tag) {
        return reject(
            Reason::DuplicateTx,
            format!("{} {} already on chain", tx.tx_id, tx.state_tag.label()),
        );
    }
    Ok(effect)
}

fn plan_transition(tx: &Transaction, snap: &Snapshot, block_index: u64) -> Result<Effect, Rejection> {
    let transition = well_formed(tx)?;
    let author = active_entity(snap, &tx.author, block_index)?;

    match (transition, &tx.payload) {
        (Transition::Record(RecordStateTag::Create), Payload::Record(d)) => {
            create_record(snap, author, d, block_index)
        }
        (Transition::Record(RecordStateTag::Update), Payload::Record(d)) => {
            update_record(snap, author, d, block_index)
        }
        (Transition::Record(RecordStateTag::Remove), Payload::RecordRef { record_id }) => {
            let record = active_record(snap, record_id)?;
            if !record.keepers.contains(&author.id) {
                return reject(Reason::NotKeeper, format!("{} does not keep {}", author.id, record_id));
            }
            Ok(Effect::RemoveRecord(record_id.clone()))
        }
        (Transition::Register, Payload::Registration(entity)) => {
            if author.role != Role::ConsortiumNode {
                return reject(Reason::BadAuthor, "registrations are issued by consortium nodes");
            }
            if entity.role == Role::ConsortiumNode {
                return reject(Reason::Malformed, "consortium membership is fixed at genesis");
            }
            if snap.entity(&entity.id).is_some() {
                return reject(Reason::EntityExists, format!("{} already registered", entity.id));
            }
            Ok(Effect::Register(entity.clone()))
        }
        (Transition::Policy(PolicyStateTag::Request), Payload::Access(req)) => {
            open_request(snap, author, req, tx.timestamp)
        }
        (Transition::Policy(tag), Payload::RequestRef { request_id }) => {
            let progress = live_request(snap, request_id)?;
            match tag {
                PolicyStateTag::Require => {
                    if author.role != Role::ConsortiumNode {
                        return reject(Reason::BadAuthor, "REQUIRE is issued by a consortium node");
                    }
                    if progress.state != RequestState::Requested {
                        return reject(
                            Reason::IllegalTransition,
                            format!("request {} already past REQUIRE", request_id),
                        );
                    }
                    if let Some(p) = snap.policy(&progress.party, &progress.record) {
                        if p.request_id != *request_id && p.is_live(tx.timestamp) {
                            return reject(Reason::PolicyExists, "a live policy already covers this pair");
                        }
                    }
                    let record = active_record(snap, &progress.record)?;
                    Ok(Effect::Require {
                        request: request_id.clone(),
                        quorum: Quorum::of(record),
                        at: tx.timestamp,
                    })
                }
                _ => reject(
                    Reason::IllegalTransition,
                    "aggregate decisions are derived from keeper votes, not submitted",
                ),
            }
        }
        (Transition::Individual(tag), Payload::RequestRef { request_id }) => {
            if tag == IndividualAuthStateTag::RequireAction {
                return reject(
                    Reason::IllegalTransition,
                    "REQUIRE_ACTION slots are opened by REQUIRE",
                );
            }
            let progress = live_request(snap, request_id)?;
            let quorum = match (&progress.quorum, progress.state) {
                (Some(q), RequestState::WaitingAuthCheck | RequestState::Granted) => q,
                _ => {
                    return reject(
                        Reason::IllegalTransition,
                        format!("request {} is not awaiting authorization", request_id),
                    )
                }
            };
            if !quorum.keepers.contains(&author.id) {
                return reject(
                    Reason::NotKeeper,
                    format!("{} is not a keeper for request {}", author.id, request_id),
                );
            }
            let outcome = match tag {
                IndividualAuthStateTag::AuthGrant => {
                    apply_vote(quorum, &progress.votes, progress.state, &author.id, Vote::Grant)
                }
                IndividualAuthStateTag::AuthDeny => {
                    apply_vote(quorum, &progress.votes, progress.state, &author.id, Vote::Deny)
                }
                IndividualAuthStateTag::AuthRevoke => {
                    apply_revocation(quorum, &progress.votes, progress.state, &author.id)
                }
                IndividualAuthStateTag::RequireAction => unreachable!(),
            };
            match outcome {
                Ok((votes, state)) => Ok(Effect::Decide {
                    request: request_id.clone(),
                    votes,
                    state,
                }),
                Err(reason) => reject(reason, format!("{} on request {}", author.id, request_id)),
            }
        }
        _ => reject(Reason::Malformed, "payload shape does not match state tag"),
    }
}

fn active_entity<'a>(snap: &'a Snapshot, id: &EntityId, block_index: u64) -> Result<&'a Entity, Rejection> {
    match snap.registration(id) {
        Some(reg) if reg.height < block_index => Ok(&reg.entity),
        Some(_) => reject(
            Reason::UnknownEntity,
            format!("{} becomes active in the block after its registration", id),
        ),
        None => reject(Reason::UnknownEntity, format!("{} is not registered", id)),
    }
}

fn active_record<'a>(snap: &'a Snapshot, id: &RecordId) -> Result<&'a Record, Rejection> {
    match snap.record(id) {
        None => reject(Reason::UnknownRecord, format!("{} is unknown", id)),
        Some(r) if r.status == RecordStatus::Removed => {
            reject(Reason::RecordTerminal, format!("{} was removed", id))
        }
        Some(r) => Ok(r),
    }
}

/// Request that is known, whose record is still active and which has not
/// reached a terminal state.
fn live_request<'a>(snap: &'a Snapshot, id: &RequestId) -> Result<&'a RequestProgress, Rejection> {
    let Some(progress) = snap.request(id) else {
        return reject(Reason::UnknownRequest, format!("{} is unknown", id));
    };
    active_record(snap, &progress.record)?;
    if progress.state.is_terminal() {
        return reject(
            Reason::RequestTerminal,
            format!("request {} is {:?}", id, progress.state),
        );
    }
    Ok(progress)
}

fn check_keepers(
    snap: &Snapshot,
    keepers: &BTreeSet<EntityId>,
    block_index: u64,
) -> Result<(), Rejection> {
    if keepers.is_empty() {
        return reject(Reason::Malformed, "a record needs at least one keeper");
    }
    for k in keepers {
        let entity = active_entity(snap, k, block_index)?;
        if entity.role != Role::DataKeeper {
            return reject(Reason::NotKeeper, format!("{} is not a data keeper", k));
        }
    }
    Ok(())
}

fn descriptor_keepers(d: &RecordDescriptor) -> Result<BTreeSet<EntityId>, Rejection> {
    let set: BTreeSet<EntityId> = d.keepers.iter().cloned().collect();
    if set.len() != d.keepers.len() {
        return reject(Reason::Malformed, "duplicate keeper in descriptor");
    }
    if d.location.is_empty() {
        return reject(Reason::Malformed, "empty location reference");
    }
    Ok(set)
}

fn create_record(
    snap: &Snapshot,
    author: &Entity,
    d: &RecordDescriptor,
    block_index: u64,
) -> Result<Effect, Rejection> {
    if author.role != Role::DataKeeper {
        return reject(Reason::BadAuthor, "records are created by data keepers");
    }
    match snap.record(&d.record_id) {
        Some(r) if r.status == RecordStatus::Removed => {
            return reject(Reason::RecordTerminal, format!("{} was removed", d.record_id))
        }
        Some(_) => return reject(Reason::RecordExists, format!("{} already exists", d.record_id)),
        None => {}
    }
    let mut keepers = descriptor_keepers(d)?;
    keepers.insert(author.id.clone());
    check_keepers(snap, &keepers, block_index)?;
    Ok(Effect::PutRecord(Record {
        id: d.record_id.clone(),
        keepers,
        agreement: d.agreement,
        location: d.location.clone(),
        status: RecordStatus::Active,
    }))
}

fn update_record(
    snap: &Snapshot,
    author: &Entity,
    d: &RecordDescriptor,
    block_index: u64,
) -> Result<Effect, Rejection> {
    let current = active_record(snap, &d.record_id)?;
    if !current.keepers.contains(&author.id) {
        return reject(Reason::NotKeeper, format!("{} does not keep {}", author.id, d.record_id));
    }
    let keepers = descriptor_keepers(d)?;
    check_keepers(snap, &keepers, block_index)?;
    Ok(Effect::PutRecord(Record {
        id: d.record_id.clone(),
        keepers,
        agreement: d.agreement,
        location: d.location.clone(),
        status: RecordStatus::Active,
    }))
}

fn open_request(
    snap: &Snapshot,
    author: &Entity,
    req: &AccessRequest,
    timestamp: u64,
) -> Result<Effect, Rejection> {
    active_record(snap, &req.record)?;
    if author.id != req.party || author.role != Role::ThirdParty {
        return reject(Reason::BadAuthor, "REQUEST must be signed by the requesting third party");
    }
    if req.level == PermissionLevel::None {
        return reject(Reason::Malformed, "NONE is not a requestable level");
    }
    if snap.request(&req.request_id).is_some() {
        return reject(Reason::PolicyExists, format!("request {} already exists", req.request_id));
    }
    if let Some(p) = snap.policy(&req.party, &req.record) {
        let open = snap.request(&p.request_id).is_some_and(|r| r.state.is_open());
        if open || p.is_live(timestamp) {
            return reject(
                Reason::PolicyExists,
                format!("{} already has a pending or live policy on {}", req.party, req.record),
            );
        }
    }
    Ok(Effect::OpenRequest(RequestProgress {
        request_id: req.request_id.clone(),
        party: req.party.clone(),
        record: req.record.clone(),
        level: req.level,
        expiry: req.expiry,
        state: RequestState::Requested,
        votes: Votes::new(),
        quorum: None,
        requested_at: timestamp,
        required_at: None,
    }))
}
