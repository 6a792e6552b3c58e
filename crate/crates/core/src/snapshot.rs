//! Policy decision point: the state obtained by replaying chained
//! transactions, and access evaluation against it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Block, GenesisConfig};
use crate::lifecycle::{self, Effect, Rejection, RequestProgress, RequestState, Vote};
use crate::model::{
    Entity, EntityDirectory, EntityId, PermissionLevel, Policy, PolicyStatus, Record, RecordId,
    RecordStatus, RequestId, StateTag, Transaction, TxId, TxKey,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Registration {
    pub entity: Entity,
    /// Block that registered the entity; 0 for genesis entities.
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditEntry {
    pub block_index: u64,
    pub transaction: Transaction,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("REPLAY_INCONSISTENT: block {block_index} tx {tx_id}: {rejection}")]
    Inconsistent {
        block_index: u64,
        tx_id: TxId,
        rejection: Rejection,
    },
    #[error("REPLAY_INCONSISTENT: block {found} follows height {height}")]
    OutOfOrder { height: u64, found: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("UNKNOWN_RECORD: {0}")]
pub struct UnknownRecord(pub RecordId);

/// Derived current state at some chain height.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Snapshot {
    height: u64,
    entities: BTreeMap<EntityId, Registration>,
    records: BTreeMap<RecordId, Record>,
    requests: BTreeMap<RequestId, RequestProgress>,
    policies: BTreeMap<(EntityId, RecordId), Policy>,
    audit: BTreeMap<RecordId, Vec<AuditEntry>>,
    seen: BTreeSet<TxKey>,
}

impl EntityDirectory for Snapshot {
    fn entity(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.get(id).map(|r| &r.entity)
    }
}

impl Snapshot {
    /// State before any block after genesis: only the configured entities.
    pub fn genesis(config: &GenesisConfig) -> Self {
        let entities = config
            .members
            .iter()
            .chain(&config.entities)
            .map(|e| {
                (
                    e.id.clone(),
                    Registration {
                        entity: e.clone(),
                        height: 0,
                    },
                )
            })
            .collect();
        Snapshot {
            entities,
            ..Snapshot::default()
        }
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn registration(&self, id: &EntityId) -> Option<&Registration> {
        self.entities.get(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Registration> {
        self.entities.values()
    }

    pub fn record(&self, id: &RecordId) -> Option<&Record> {
        self.records.get(id)
    }

    pub fn records(&self) -> impl Iterator<Item = &Record> {
        self.records.values()
    }

    pub fn request(&self, id: &RequestId) -> Option<&RequestProgress> {
        self.requests.get(id)
    }

    pub fn requests(&self) -> impl Iterator<Item = &RequestProgress> {
        self.requests.values()
    }

    /// Most recent policy between `party` and `record`.
    pub fn policy(&self, party: &EntityId, record: &RecordId) -> Option<&Policy> {
        self.policies.get(&(party.clone(), record.clone()))
    }

    pub fn policies(&self) -> impl Iterator<Item = &Policy> {
        self.policies.values()
    }

    pub fn contains_tx(&self, tx_id: &TxId, tag: StateTag) -> bool {
        self.seen.contains(&(tx_id.clone(), tag))
    }

    /// Admit and apply one transaction as part of block `block_index`.
    pub fn apply_tx(&mut self, tx: &Transaction, block_index: u64) -> Result<(), Rejection> {
        let effect = lifecycle::plan(tx, self, block_index)?;
        self.apply_effect(effect, tx, block_index);
        Ok(())
    }

    fn apply_effect(&mut self, effect: Effect, tx: &Transaction, block_index: u64) {
        let touched = match effect {
            Effect::PutRecord(record) => {
                let id = record.id.clone();
                self.records.insert(id.clone(), record);
                Some(id)
            }
            Effect::RemoveRecord(id) => {
                if let Some(r) = self.records.get_mut(&id) {
                    r.status = RecordStatus::Removed;
                }
                Some(id)
            }
            Effect::Register(entity) => {
                self.entities.insert(
                    entity.id.clone(),
                    Registration {
                        entity,
                        height: block_index,
                    },
                );
                None
            }
            Effect::OpenRequest(progress) => {
                let key = (progress.party.clone(), progress.record.clone());
                self.policies.insert(
                    key,
                    Policy {
                        request_id: progress.request_id.clone(),
                        party: progress.party.clone(),
                        record: progress.record.clone(),
                        level: progress.level,
                        status: PolicyStatus::Pending,
                        expiry: progress.expiry,
                    },
                );
                let record = progress.record.clone();
                self.requests.insert(progress.request_id.clone(), progress);
                Some(record)
            }
            Effect::Require {
                request,
                quorum,
                at,
            } => {
                let progress = self.requests.get_mut(&request).expect("planned on a known request");
                progress.quorum = Some(quorum);
                progress.required_at = Some(at);
                progress.state = RequestState::WaitingAuthCheck;
                Some(progress.record.clone())
            }
            Effect::Decide {
                request,
                votes,
                state,
            } => {
                let progress = self.requests.get_mut(&request).expect("planned on a known request");
                progress.votes = votes;
                progress.state = state;
                let key = (progress.party.clone(), progress.record.clone());
                if let Some(policy) = self.policies.get_mut(&key) {
                    if policy.request_id == request {
                        policy.status = policy_status(state);
                    }
                }
                Some(progress.record.clone())
            }
        };
        if let Some(record) = touched {
            self.audit.entry(record).or_default().push(AuditEntry {
                block_index,
                transaction: tx.clone(),
            });
        }
        self.seen.insert(tx.key());
    }

    /// Fold a block on top of this snapshot, in records, policies,
    /// individual-authorization order.
    pub fn apply_block(&mut self, block: &Block) -> Result<(), ReplayError> {
        if block.index != self.height + 1 {
            return Err(ReplayError::OutOfOrder {
                height: self.height,
                found: block.index,
            });
        }
        for tx in block.data.iter() {
            self.apply_tx(tx, block.index)
                .map_err(|rejection| ReplayError::Inconsistent {
                    block_index: block.index,
                    tx_id: tx.tx_id.clone(),
                    rejection,
                })?;
        }
        self.height = block.index;
        Ok(())
    }

    /// Snapshot that additionally folds `pending` transactions as if they
    /// were mined in the next block. Inadmissible ones are skipped and
    /// returned.
    pub fn provisional<'a>(
        &self,
        pending: impl IntoIterator<Item = &'a Transaction>,
    ) -> (Snapshot, Vec<(&'a Transaction, Rejection)>) {
        let mut snap = self.clone();
        let next = self.height + 1;
        let mut rejected = Vec::new();
        for tx in pending {
            if let Err(r) = snap.apply_tx(tx, next) {
                rejected.push((tx, r));
            }
        }
        (snap, rejected)
    }

    /// Open keeper vote slots for `keeper`.
    pub fn pending_actions(&self, keeper: &EntityId) -> Vec<PendingAction> {
        self.requests
            .values()
            .filter(|r| r.state == RequestState::WaitingAuthCheck)
            .filter(|r| {
                r.quorum.as_ref().is_some_and(|q| q.keepers.contains(keeper))
                    && !r.votes.contains_key(keeper)
            })
            .filter(|r| {
                self.records
                    .get(&r.record)
                    .is_some_and(|rec| rec.status == RecordStatus::Active)
            })
            .map(|r| PendingAction {
                request_id: r.request_id.clone(),
                record: r.record.clone(),
                party: r.party.clone(),
                level: r.level,
                keeper: keeper.clone(),
                since: r.required_at.unwrap_or(r.requested_at),
            })
            .collect()
    }
}

fn policy_status(state: RequestState) -> PolicyStatus {
    match state {
        RequestState::Requested | RequestState::WaitingAuthCheck => PolicyStatus::Pending,
        RequestState::Granted => PolicyStatus::Granted,
        RequestState::Denied => PolicyStatus::Denied,
        RequestState::Revoked => PolicyStatus::Revoked,
    }
}

/// A keeper vote the gateway is waiting for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PendingAction {
    pub request_id: RequestId,
    pub record: RecordId,
    pub party: EntityId,
    pub level: PermissionLevel,
    pub keeper: EntityId,
    pub since: u64,
}

/// Replay `chain[0..=up_to]` from the genesis configuration.
pub fn replay(chain: &[Block], config: &GenesisConfig, up_to: u64) -> Result<Snapshot, ReplayError> {
    let mut snap = Snapshot::genesis(config);
    for block in chain.iter().skip(1).take_while(|b| b.index <= up_to) {
        snap.apply_block(block)?;
    }
    Ok(snap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Grant,
    Deny,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecisionReason {
    PolicyGranted,
    PolicyDenied,
    PolicyRevoked,
    Expired,
    InsufficientLevel,
    RecordRemoved,
    UnknownRecord,
    NoPolicy,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AccessDecision {
    pub outcome: Outcome,
    pub reason: DecisionReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_ref: Option<RequestId>,
}

impl AccessDecision {
    fn new(outcome: Outcome, reason: DecisionReason, policy_ref: Option<&RequestId>) -> Self {
        AccessDecision {
            outcome,
            reason,
            policy_ref: policy_ref.cloned(),
        }
    }
}

pub fn evaluate(
    snap: &Snapshot,
    party: &EntityId,
    record: &RecordId,
    level: PermissionLevel,
    now: u64,
) -> AccessDecision {
    use DecisionReason as R;
    match snap.record(record) {
        None => return AccessDecision::new(Outcome::Deny, R::UnknownRecord, None),
        Some(r) if r.status == RecordStatus::Removed => {
            return AccessDecision::new(Outcome::Deny, R::RecordRemoved, None)
        }
        Some(_) => {}
    }
    let Some(policy) = snap.policy(party, record) else {
        return AccessDecision::new(Outcome::Unknown, R::NoPolicy, None);
    };
    let pref = Some(&policy.request_id);
    match policy.status {
        PolicyStatus::Pending => AccessDecision::new(Outcome::Unknown, R::Pending, pref),
        PolicyStatus::Denied => AccessDecision::new(Outcome::Deny, R::PolicyDenied, pref),
        PolicyStatus::Revoked => AccessDecision::new(Outcome::Deny, R::PolicyRevoked, pref),
        PolicyStatus::Granted if policy.expiry.is_some_and(|e| e <= now) => {
            AccessDecision::new(Outcome::Deny, R::Expired, pref)
        }
        PolicyStatus::Granted if policy.level < level => {
            AccessDecision::new(Outcome::Deny, R::InsufficientLevel, pref)
        }
        PolicyStatus::Granted => AccessDecision::new(Outcome::Grant, R::PolicyGranted, pref),
    }
}

pub fn audit_trail<'a>(snap: &'a Snapshot, record: &RecordId) -> Result<&'a [AuditEntry], UnknownRecord> {
    if snap.record(record).is_none() {
        return Err(UnknownRecord(record.clone()));
    }
    Ok(snap.audit.get(record).map(Vec::as_slice).unwrap_or(&[]))
}

/// Live grant count of a request, for status reporting.
pub fn live_grants(progress: &RequestProgress) -> usize {
    progress.votes.values().filter(|v| **v == Vote::Grant).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgreementRule, PermissionLevel, RecordId, RequestId, StateTag, TxId};
    use crate::testkit::Fixture;
    use crate::tx::Signer;

    fn world() -> (Fixture, Snapshot) {
        let fx = Fixture::new(50);
        let snap = fx.params(0).genesis_snapshot();
        (fx, snap)
    }

    #[test]
    fn pending_actions_follow_votes() {
        let (fx, mut snap) = world();
        let (k1, k2, k3, p1, m1) = (fx.key("k1"), fx.key("k2"), fx.key("k3"), fx.key("p1"), fx.key("m1"));
        let keepers = ["k1", "k2", "k3"].map(Fixture::id).to_vec();
        let q = RequestId::new("q1").unwrap();
        let txs = [
            Signer::new(&k1, Fixture::id("k1"))
                .create_record(TxId::new("c").unwrap(), RecordId::new("r1").unwrap(), keepers, AgreementRule::All, "l", 1)
                .unwrap(),
            Signer::new(&p1, Fixture::id("p1"))
                .request(q.clone(), RecordId::new("r1").unwrap(), PermissionLevel::Read, None, 2)
                .unwrap(),
            Signer::new(&m1, Fixture::id("m1")).require(q.clone(), 3).unwrap(),
            Signer::new(&k2, Fixture::id("k2")).vote(q.clone(), StateTag::AuthGrant, 4).unwrap(),
        ];
        for (i, tx) in txs.iter().enumerate() {
            snap.apply_tx(tx, i as u64 + 1).unwrap();
        }
        assert_eq!(snap.pending_actions(&Fixture::id("k1")).len(), 1);
        assert!(snap.pending_actions(&Fixture::id("k2")).is_empty());
        assert_eq!(snap.pending_actions(&Fixture::id("k3")).len(), 1);
        for (n, k) in [(5, &k1), (6, &k3)] {
            let name = if n == 5 { "k1" } else { "k3" };
            let tx = Signer::new(k, Fixture::id(name)).vote(q.clone(), StateTag::AuthGrant, n).unwrap();
            snap.apply_tx(&tx, n).unwrap();
        }
        assert_eq!(snap.request(&q).unwrap().state, RequestState::Granted);
        for k in ["k1", "k2", "k3"] {
            assert!(snap.pending_actions(&Fixture::id(k)).is_empty());
        }
    }

    #[test]
    fn out_of_order_block_is_refused() {
        let (fx, mut snap) = world();
        let mut b = fx.params(0).genesis().clone();
        b.index = 2;
        assert!(matches!(snap.apply_block(&b), Err(ReplayError::OutOfOrder { .. })));
    }

    #[test]
    fn unknown_record_evaluates_deny() {
        let (_, snap) = world();
        let d = evaluate(&snap, &Fixture::id("p1"), &RecordId::new("zz").unwrap(), PermissionLevel::Read, 0);
        assert_eq!((d.outcome, d.reason), (Outcome::Deny, DecisionReason::UnknownRecord));
    }
}
