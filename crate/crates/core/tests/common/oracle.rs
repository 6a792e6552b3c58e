//! Reference models written from the rule text, independent of the library's
//! state representation: every query rescans the full transaction history.

#![allow(dead_code)]

use std::collections::BTreeSet;

use ledgergate_core::model::{
    AgreementRule, Entity, EntityId, Payload, PermissionLevel, RecordId, RequestId, Role, StateTag,
    Transaction, TxKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OVote {
    None,
    Grant,
    Deny,
    Revoked,
}

pub fn threshold(rule: AgreementRule, n: usize) -> usize {
    match rule {
        AgreementRule::Any => 1,
        AgreementRule::All => n,
        // Smallest count strictly greater than half.
        AgreementRule::Majority => (0..=n).find(|k| 2 * k > n).unwrap(),
    }
}

/// Aggregate by asking whether the remaining undecided keepers could still
/// lift the live grant count to the threshold.
pub fn aggregate(rule: AgreementRule, votes: &[OVote]) -> &'static str {
    let need = threshold(rule, votes.len());
    let grants = votes.iter().filter(|v| **v == OVote::Grant).count();
    let undecided = votes.iter().filter(|v| **v == OVote::None).count();
    if grants >= need {
        "GRANTED"
    } else if grants + undecided < need {
        "DENIED"
    } else {
        "PENDING"
    }
}

/// Every vote vector over `n` keepers.
pub fn all_vote_vectors(n: usize, alphabet: &[OVote]) -> Vec<Vec<OVote>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v| {
                alphabet.iter().map(move |a| {
                    let mut w = v.clone();
                    w.push(*a);
                    w
                })
            })
            .collect();
    }
    out
}

/// Admissibility by rescanning the accepted history.
pub struct HistoryOracle {
    genesis: Vec<Entity>,
    accepted: Vec<(u64, Transaction)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ORecord {
    keepers: BTreeSet<EntityId>,
    rule: AgreementRule,
    removed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OState {
    Requested,
    Waiting,
    Granted,
    Denied,
    Revoked,
}

impl HistoryOracle {
    pub fn new(genesis: Vec<Entity>) -> Self {
        HistoryOracle {
            genesis,
            accepted: Vec::new(),
        }
    }

    pub fn accept(&mut self, block: u64, tx: Transaction) {
        self.accepted.push((block, tx));
    }

    fn prefix(&self, n: usize) -> HistoryOracle {
        HistoryOracle {
            genesis: self.genesis.clone(),
            accepted: self.accepted[..n].to_vec(),
        }
    }

    fn entity(&self, id: &EntityId, block: u64) -> Result<Entity, &'static str> {
        if let Some(e) = self.genesis.iter().find(|e| &e.id == id) {
            return Ok(e.clone());
        }
        for (b, tx) in &self.accepted {
            if let Payload::Registration(e) = &tx.payload {
                if tx.state_tag == StateTag::Register && &e.id == id {
                    return if *b < block { Ok(e.clone()) } else { Err("UNKNOWN_ENTITY") };
                }
            }
        }
        Err("UNKNOWN_ENTITY")
    }

    fn exists(&self, id: &EntityId) -> bool {
        self.entity(id, u64::MAX).is_ok()
    }

    fn record(&self, id: &RecordId) -> Option<ORecord> {
        let mut state: Option<ORecord> = None;
        for (_, tx) in &self.accepted {
            match (&tx.state_tag, &tx.payload) {
                (StateTag::Create, Payload::Record(d)) if &d.record_id == id => {
                    let mut keepers: BTreeSet<EntityId> = d.keepers.iter().cloned().collect();
                    keepers.insert(tx.author.clone());
                    state = Some(ORecord {
                        keepers,
                        rule: d.agreement,
                        removed: false,
                    });
                }
                (StateTag::Update, Payload::Record(d)) if &d.record_id == id => {
                    state = Some(ORecord {
                        keepers: d.keepers.iter().cloned().collect(),
                        rule: d.agreement,
                        removed: false,
                    });
                }
                (StateTag::Remove, Payload::RecordRef { record_id }) if record_id == id => {
                    if let Some(r) = state.as_mut() {
                        r.removed = true;
                    }
                }
                _ => {}
            }
        }
        state
    }

    fn active_record(&self, id: &RecordId) -> Result<ORecord, &'static str> {
        match self.record(id) {
            None => Err("UNKNOWN_RECORD"),
            Some(r) if r.removed => Err("RECORD_TERMINAL"),
            Some(r) => Ok(r),
        }
    }

    fn request_tx(&self, id: &RequestId) -> Option<(usize, &Transaction)> {
        self.accepted.iter().enumerate().find_map(|(i, (_, tx))| match &tx.payload {
            Payload::Access(a) if &a.request_id == id && tx.state_tag == StateTag::Request => Some((i, tx)),
            _ => None,
        })
    }

    /// Keepers and rule frozen by the REQUIRE, recomputed from the history
    /// prefix before it.
    fn quorum(&self, id: &RequestId) -> Option<(BTreeSet<EntityId>, AgreementRule)> {
        let at = self.accepted.iter().position(|(_, tx)| {
            tx.state_tag == StateTag::Require
                && tx.kind == TxKind::PolicyOp
                && matches!(&tx.payload, Payload::RequestRef { request_id } if request_id == id)
        })?;
        let (_, tx) = self.request_tx(id)?;
        let Payload::Access(a) = &tx.payload else { unreachable!() };
        let r = self.prefix(at).record(&a.record)?;
        Some((r.keepers, r.rule))
    }

    fn vote_log(&self, id: &RequestId) -> Vec<(EntityId, StateTag)> {
        self.accepted
            .iter()
            .filter(|(_, tx)| tx.kind == TxKind::IndividualAuth)
            .filter(|(_, tx)| matches!(&tx.payload, Payload::RequestRef { request_id } if request_id == id))
            .map(|(_, tx)| (tx.author.clone(), tx.state_tag))
            .collect()
    }

    /// Request state by replaying its vote log from scratch.
    pub fn request_state(&self, id: &RequestId) -> Option<OState> {
        self.request_tx(id)?;
        let Some((keepers, rule)) = self.quorum(id) else {
            return Some(OState::Requested);
        };
        let keepers: Vec<EntityId> = keepers.into_iter().collect();
        let mut votes = vec![OVote::None; keepers.len()];
        let mut state = OState::Waiting;
        for (who, tag) in self.vote_log(id) {
            let i = keepers.iter().position(|k| *k == who).unwrap();
            votes[i] = match tag {
                StateTag::AuthGrant => OVote::Grant,
                StateTag::AuthDeny => OVote::Deny,
                StateTag::AuthRevoke => OVote::Revoked,
                _ => unreachable!(),
            };
            let live = votes.iter().filter(|v| **v == OVote::Grant).count();
            let need = threshold(rule, keepers.len());
            state = match (state, tag) {
                (OState::Granted, StateTag::AuthRevoke) if live < need => OState::Revoked,
                (OState::Granted, _) => OState::Granted,
                (_, _) => match aggregate(rule, &votes) {
                    "GRANTED" if tag != StateTag::AuthRevoke => OState::Granted,
                    "DENIED" => OState::Denied,
                    _ => OState::Waiting,
                },
            };
        }
        Some(state)
    }

    fn vote_of(&self, id: &RequestId, keeper: &EntityId) -> OVote {
        let mut v = OVote::None;
        for (who, tag) in self.vote_log(id) {
            if &who == keeper {
                v = match tag {
                    StateTag::AuthGrant => OVote::Grant,
                    StateTag::AuthDeny => OVote::Deny,
                    _ => OVote::Revoked,
                };
            }
        }
        v
    }

    /// Latest request opened for the pair, with its state.
    fn policy(&self, party: &EntityId, record: &RecordId) -> Option<(RequestId, OState, Option<u64>)> {
        self.accepted.iter().rev().find_map(|(_, tx)| match &tx.payload {
            Payload::Access(a) if &a.party == party && &a.record == record && tx.state_tag == StateTag::Request => {
                Some((a.request_id.clone(), self.request_state(&a.request_id).unwrap(), a.expiry))
            }
            _ => None,
        })
    }

    fn live(state: OState, expiry: Option<u64>, now: u64) -> bool {
        state == OState::Granted && expiry.is_none_or(|e| e > now)
    }

    fn live_request(&self, id: &RequestId) -> Result<OState, &'static str> {
        let Some((_, tx)) = self.request_tx(id) else {
            return Err("UNKNOWN_REQUEST");
        };
        let Payload::Access(a) = &tx.payload else { unreachable!() };
        self.active_record(&a.record)?;
        let state = self.request_state(id).unwrap();
        if matches!(state, OState::Denied | OState::Revoked) {
            return Err("REQUEST_TERMINAL");
        }
        Ok(state)
    }

    fn check_keepers(&self, keepers: &BTreeSet<EntityId>, block: u64) -> Result<(), &'static str> {
        if keepers.is_empty() {
            return Err("MALFORMED");
        }
        for k in keepers {
            if self.entity(k, block)?.role != Role::DataKeeper {
                return Err("NOT_KEEPER");
            }
        }
        Ok(())
    }

    pub fn check(&self, tx: &Transaction, block: u64) -> Result<(), &'static str> {
        use StateTag as S;
        use TxKind as K;
        let shape = match (tx.kind, tx.state_tag, &tx.payload) {
            (K::RecordOp, S::Create | S::Update, Payload::Record(_)) => true,
            (K::RecordOp, S::Remove, Payload::RecordRef { .. }) => true,
            (K::RecordOp, S::Register, Payload::Registration(_)) => true,
            (K::PolicyOp, S::Request, Payload::Access(_)) => true,
            (K::PolicyOp, S::Require | S::AuthGrant | S::AuthDeny | S::AuthRevoke, Payload::RequestRef { .. }) => true,
            (K::IndividualAuth, S::RequireAction | S::AuthGrant | S::AuthDeny | S::AuthRevoke, Payload::RequestRef { .. }) => {
                true
            }
            _ => false,
        };
        if !shape {
            return Err("MALFORMED");
        }
        let author = self.entity(&tx.author, block)?;
        self.check_transition(tx, &author, block)?;
        let replay = self
            .accepted
            .iter()
            .any(|(_, t)| t.tx_id == tx.tx_id && t.state_tag == tx.state_tag);
        if replay {
            return Err("DUPLICATE_TX");
        }
        Ok(())
    }

    fn check_transition(&self, tx: &Transaction, author: &Entity, block: u64) -> Result<(), &'static str> {
        use StateTag as S;
        match (tx.kind, tx.state_tag, &tx.payload) {
            (TxKind::RecordOp, S::Create, Payload::Record(d)) => {
                if author.role != Role::DataKeeper {
                    return Err("BAD_AUTHOR");
                }
                match self.record(&d.record_id) {
                    Some(r) if r.removed => return Err("RECORD_TERMINAL"),
                    Some(_) => return Err("RECORD_EXISTS"),
                    None => {}
                }
                let mut keepers: BTreeSet<EntityId> = d.keepers.iter().cloned().collect();
                if keepers.len() != d.keepers.len() || d.location.is_empty() {
                    return Err("MALFORMED");
                }
                keepers.insert(author.id.clone());
                self.check_keepers(&keepers, block)
            }
            (TxKind::RecordOp, S::Update, Payload::Record(d)) => {
                let r = self.active_record(&d.record_id)?;
                if !r.keepers.contains(&author.id) {
                    return Err("NOT_KEEPER");
                }
                let keepers: BTreeSet<EntityId> = d.keepers.iter().cloned().collect();
                if keepers.len() != d.keepers.len() || d.location.is_empty() {
                    return Err("MALFORMED");
                }
                self.check_keepers(&keepers, block)
            }
            (TxKind::RecordOp, S::Remove, Payload::RecordRef { record_id }) => {
                let r = self.active_record(record_id)?;
                if !r.keepers.contains(&author.id) {
                    return Err("NOT_KEEPER");
                }
                Ok(())
            }
            (TxKind::RecordOp, S::Register, Payload::Registration(e)) => {
                if author.role != Role::ConsortiumNode {
                    return Err("BAD_AUTHOR");
                }
                if e.role == Role::ConsortiumNode {
                    return Err("MALFORMED");
                }
                if self.exists(&e.id) {
                    return Err("ENTITY_EXISTS");
                }
                Ok(())
            }
            (TxKind::PolicyOp, S::Request, Payload::Access(a)) => {
                self.active_record(&a.record)?;
                if author.id != a.party || author.role != Role::ThirdParty {
                    return Err("BAD_AUTHOR");
                }
                if a.level == PermissionLevel::None {
                    return Err("MALFORMED");
                }
                if self.request_tx(&a.request_id).is_some() {
                    return Err("POLICY_EXISTS");
                }
                if let Some((_, state, expiry)) = self.policy(&a.party, &a.record) {
                    let open = matches!(state, OState::Requested | OState::Waiting);
                    if open || Self::live(state, expiry, tx.timestamp) {
                        return Err("POLICY_EXISTS");
                    }
                }
                Ok(())
            }
            (TxKind::PolicyOp, tag, Payload::RequestRef { request_id }) => {
                let state = self.live_request(request_id)?;
                if tag != S::Require {
                    return Err("ILLEGAL_TRANSITION");
                }
                if author.role != Role::ConsortiumNode {
                    return Err("BAD_AUTHOR");
                }
                if state != OState::Requested {
                    return Err("ILLEGAL_TRANSITION");
                }
                let (_, req) = self.request_tx(request_id).unwrap();
                let Payload::Access(a) = &req.payload else { unreachable!() };
                if let Some((rid, st, expiry)) = self.policy(&a.party, &a.record) {
                    if &rid != request_id && Self::live(st, expiry, tx.timestamp) {
                        return Err("POLICY_EXISTS");
                    }
                }
                Ok(())
            }
            (TxKind::IndividualAuth, tag, Payload::RequestRef { request_id }) => {
                if tag == S::RequireAction {
                    return Err("ILLEGAL_TRANSITION");
                }
                let state = self.live_request(request_id)?;
                if !matches!(state, OState::Waiting | OState::Granted) {
                    return Err("ILLEGAL_TRANSITION");
                }
                let (keepers, _) = self.quorum(request_id).unwrap();
                if !keepers.contains(&author.id) {
                    return Err("NOT_KEEPER");
                }
                let prior = self.vote_of(request_id, &author.id);
                match tag {
                    S::AuthRevoke if prior != OVote::Grant => Err("REVOKE_WITHOUT_GRANT"),
                    S::AuthGrant | S::AuthDeny if prior != OVote::None => Err("DUPLICATE_VOTE"),
                    _ => Ok(()),
                }
            }
            _ => unreachable!("shape checked"),
        }
    }
}
