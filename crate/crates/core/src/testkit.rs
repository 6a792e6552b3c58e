//! Deterministic fixtures and random generators for tests and benches.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::crypto::{KeyPair, Signature};
use crate::exec::Exec;
use crate::ledger::{mine_block, Block, BlockData, ChainParams, GenesisConfig, MiningContext};
use crate::lifecycle::admissible;
use crate::model::{
    AccessRequest, AgreementRule, Entity, EntityId, Payload, PermissionLevel, RecordDescriptor,
    RecordId, RequestId, Role, StateTag, Transaction, TxId, TxKind, UnsignedTx,
};
use crate::snapshot::Snapshot;
use crate::tx::{request_tx_id, vote_slot_id};

pub const GENESIS_TIMESTAMP: u64 = 1_700_000_000;

/// Named entities with keys derived from a seed: members `m1..m3`, keepers
/// `k1..k5` and third parties `p1..p3`, plus unregistered names `u1..u3`
/// that can be registered later.
#[derive(Clone)]
pub struct Fixture {
    pub seed: u64,
    pub members: Vec<Entity>,
    pub entities: Vec<Entity>,
    pub unregistered: Vec<Entity>,
}

impl Fixture {
    pub fn new(seed: u64) -> Self {
        let make = |name: String, role| Entity {
            public_key: KeyPair::from_seed_label(seed, &name).public(),
            id: EntityId::new(name).expect("fixture names are valid"),
            role,
        };
        let members = (1..=3).map(|i| make(format!("m{i}"), Role::ConsortiumNode)).collect();
        let mut entities: Vec<Entity> = (1..=5).map(|i| make(format!("k{i}"), Role::DataKeeper)).collect();
        entities.extend((1..=3).map(|i| make(format!("p{i}"), Role::ThirdParty)));
        let unregistered = (1..=3)
            .map(|i| {
                let role = if i % 2 == 1 { Role::DataKeeper } else { Role::ThirdParty };
                make(format!("u{i}"), role)
            })
            .collect();
        Fixture {
            seed,
            members,
            entities,
            unregistered,
        }
    }

    pub fn config(&self, difficulty: u32) -> GenesisConfig {
        GenesisConfig {
            timestamp: GENESIS_TIMESTAMP,
            difficulty,
            members: self.members.clone(),
            entities: self.entities.clone(),
        }
    }

    pub fn params(&self, difficulty: u32) -> ChainParams {
        ChainParams::new(self.config(difficulty)).expect("fixture config is valid")
    }

    pub fn key(&self, name: &str) -> KeyPair {
        KeyPair::from_seed_label(self.seed, name)
    }

    pub fn id(name: &str) -> EntityId {
        EntityId::new(name).expect("valid id")
    }

    fn names(&self) -> Vec<EntityId> {
        self.members
            .iter()
            .chain(&self.entities)
            .chain(&self.unregistered)
            .map(|e| e.id.clone())
            .collect()
    }

    pub fn sign(&self, tx: UnsignedTx) -> Transaction {
        let key = self.key(tx.author.as_str());
        tx.sign(&key).expect("generated transactions are encodable")
    }
}

/// Random transaction source over small id pools, so that generated
/// sequences collide on records, requests and votes often.
pub struct TxGen<'a> {
    fx: &'a Fixture,
    counter: u64,
    pub timestamp: u64,
    history: Vec<Transaction>,
}

const RECORDS: usize = 4;
const REQUESTS: usize = 4;

impl<'a> TxGen<'a> {
    pub fn new(fx: &'a Fixture) -> Self {
        TxGen {
            fx,
            counter: 0,
            timestamp: GENESIS_TIMESTAMP + 1,
            history: Vec::new(),
        }
    }

    fn fresh_id(&mut self) -> TxId {
        self.counter += 1;
        TxId::new(format!("t{}", self.counter)).expect("valid id")
    }

    /// Mostly a record this generator created before, so that later
    /// operations hit live state.
    fn record(&self, rng: &mut impl Rng) -> RecordId {
        let known: Vec<&RecordId> = self
            .history
            .iter()
            .filter_map(|t| match (&t.state_tag, &t.payload) {
                (StateTag::Create, Payload::Record(d)) => Some(&d.record_id),
                _ => None,
            })
            .collect();
        match known.choose(rng) {
            Some(r) if rng.random_bool(0.75) => (*r).clone(),
            _ => RecordId::new(format!("r{}", rng.random_range(0..RECORDS))).expect("valid id"),
        }
    }

    fn request(&self, rng: &mut impl Rng) -> RequestId {
        let known: Vec<&RequestId> = self
            .history
            .iter()
            .filter_map(|t| match &t.payload {
                Payload::Access(a) => Some(&a.request_id),
                _ => None,
            })
            .collect();
        match known.choose(rng) {
            Some(r) if rng.random_bool(0.8) => (*r).clone(),
            _ => RequestId::new(format!("q{}", rng.random_range(0..REQUESTS))).expect("valid id"),
        }
    }

    /// Keepers named in any descriptor for the record `request` targets.
    fn keepers_for(&self, request: &RequestId) -> Vec<EntityId> {
        let record = self.history.iter().find_map(|t| match &t.payload {
            Payload::Access(a) if a.request_id == *request => Some(a.record.clone()),
            _ => None,
        });
        let Some(record) = record else {
            return Vec::new();
        };
        let mut out: Vec<EntityId> = Vec::new();
        for t in &self.history {
            if let Payload::Record(d) = &t.payload {
                if d.record_id == record {
                    out.extend(d.keepers.iter().cloned());
                    out.push(t.author.clone());
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    fn tick(&mut self, rng: &mut impl Rng) -> u64 {
        self.timestamp += rng.random_range(0..3);
        self.timestamp
    }

    /// Any transaction over the fixture's names, legal or not. Signatures
    /// are always valid for the named author.
    pub fn arbitrary(&mut self, rng: &mut impl Rng) -> Transaction {
        let names = self.fx.names();
        let keepers: Vec<EntityId> = self
            .fx
            .entities
            .iter()
            .filter(|e| e.role == Role::DataKeeper)
            .map(|e| e.id.clone())
            .collect();
        let parties: Vec<EntityId> = self
            .fx
            .entities
            .iter()
            .filter(|e| e.role == Role::ThirdParty)
            .map(|e| e.id.clone())
            .collect();
        let members: Vec<EntityId> = self.fx.members.iter().map(|e| e.id.clone()).collect();
        let pick = |rng: &mut dyn rand::RngCore, pool: &[EntityId], bias: f64| -> EntityId {
            if rng.random_bool(bias) {
                pool.choose(rng).expect("non-empty").clone()
            } else {
                names.choose(rng).expect("non-empty").clone()
            }
        };
        let ts = self.tick(rng);

        if !self.history.is_empty() && rng.random_bool(0.04) {
            return self.history.choose(rng).expect("non-empty").clone();
        }

        let unsigned = match rng.random_range(0..100) {
            0..=17 => {
                let author = pick(rng, &keepers, 0.93);
                let mut ks: Vec<EntityId> = keepers
                    .iter()
                    .filter(|_| rng.random_bool(0.4))
                    .cloned()
                    .collect();
                if rng.random_bool(0.8) && !ks.contains(&author) {
                    ks.push(author.clone());
                }
                ks.shuffle(rng);
                let tag = if rng.random_bool(0.7) { StateTag::Create } else { StateTag::Update };
                UnsignedTx {
                    tx_id: self.fresh_id(),
                    kind: TxKind::RecordOp,
                    state_tag: tag,
                    payload: Payload::Record(RecordDescriptor {
                        record_id: self.record(rng),
                        keepers: ks,
                        agreement: *[AgreementRule::Any, AgreementRule::Majority, AgreementRule::All]
                            .choose(rng)
                            .expect("non-empty"),
                        location: if rng.random_bool(0.97) { "ehr://loc".into() } else { String::new() },
                    }),
                    author,
                    timestamp: ts,
                }
            }
            18..=22 => UnsignedTx {
                tx_id: self.fresh_id(),
                kind: TxKind::RecordOp,
                state_tag: StateTag::Remove,
                payload: Payload::RecordRef {
                    record_id: self.record(rng),
                },
                author: pick(rng, &keepers, 0.9),
                timestamp: ts,
            },
            23..=27 => {
                let entity = if rng.random_bool(0.8) {
                    self.fx.unregistered.choose(rng).expect("non-empty").clone()
                } else {
                    self.fx
                        .members
                        .iter()
                        .chain(&self.fx.entities)
                        .collect::<Vec<_>>()
                        .choose(rng)
                        .map(|e| (*e).clone())
                        .expect("non-empty")
                };
                UnsignedTx {
                    tx_id: self.fresh_id(),
                    kind: TxKind::RecordOp,
                    state_tag: StateTag::Register,
                    payload: Payload::Registration(entity),
                    author: pick(rng, &members, 0.85),
                    timestamp: ts,
                }
            }
            28..=45 => {
                let party = pick(rng, &parties, 0.9);
                let request = self.request(rng);
                let author = if rng.random_bool(0.95) {
                    party.clone()
                } else {
                    names.choose(rng).expect("non-empty").clone()
                };
                UnsignedTx {
                    tx_id: request_tx_id(&request),
                    kind: TxKind::PolicyOp,
                    state_tag: StateTag::Request,
                    payload: Payload::Access(AccessRequest {
                        request_id: request,
                        party,
                        record: self.record(rng),
                        level: *[PermissionLevel::Read, PermissionLevel::Write, PermissionLevel::None]
                            .choose_weighted(rng, |l| if *l == PermissionLevel::None { 1 } else { 10 })
                            .expect("weights are positive"),
                        expiry: rng.random_bool(0.3).then(|| ts + rng.random_range(0..20)),
                    }),
                    author,
                    timestamp: ts,
                }
            }
            46..=60 => {
                let request = self.request(rng);
                UnsignedTx {
                    tx_id: request_tx_id(&request),
                    kind: TxKind::PolicyOp,
                    state_tag: StateTag::Require,
                    payload: Payload::RequestRef { request_id: request },
                    author: pick(rng, &members, 0.9),
                    timestamp: ts,
                }
            }
            61..=95 => {
                let request = self.request(rng);
                let electorate = self.keepers_for(&request);
                let author = match electorate.choose(rng) {
                    Some(k) if rng.random_bool(0.85) => k.clone(),
                    _ => pick(rng, &keepers, 0.9),
                };
                let tag = *[StateTag::AuthGrant, StateTag::AuthDeny, StateTag::AuthRevoke]
                    .choose_weighted(rng, |t| match t {
                        StateTag::AuthGrant => 6,
                        StateTag::AuthDeny => 2,
                        _ => 3,
                    })
                    .expect("weights are positive");
                // Revocations mostly come from someone who granted before.
                let author = match tag {
                    StateTag::AuthRevoke if rng.random_bool(0.8) => {
                        let granted: Vec<&EntityId> = self
                            .history
                            .iter()
                            .filter(|t| {
                                t.state_tag == StateTag::AuthGrant
                                    && matches!(&t.payload, Payload::RequestRef { request_id } if *request_id == request)
                            })
                            .map(|t| &t.author)
                            .collect();
                        granted.choose(rng).map_or(author, |a| (*a).clone())
                    }
                    _ => author,
                };
                UnsignedTx {
                    tx_id: vote_slot_id(&request, &author),
                    kind: TxKind::IndividualAuth,
                    state_tag: tag,
                    payload: Payload::RequestRef { request_id: request },
                    author,
                    timestamp: ts,
                }
            }
            _ => {
                // Labels that are never legal on chain, or a kind/label
                // mismatch.
                let request = self.request(rng);
                let (kind, tag) = *[
                    (TxKind::PolicyOp, StateTag::AuthGrant),
                    (TxKind::PolicyOp, StateTag::AuthRevoke),
                    (TxKind::IndividualAuth, StateTag::RequireAction),
                    (TxKind::IndividualAuth, StateTag::Require),
                    (TxKind::RecordOp, StateTag::AuthDeny),
                ]
                .choose(rng)
                .expect("non-empty");
                UnsignedTx {
                    tx_id: self.fresh_id(),
                    kind,
                    state_tag: tag,
                    payload: Payload::RequestRef { request_id: request },
                    author: pick(rng, &members, 0.5),
                    timestamp: ts,
                }
            }
        };
        let tx = self.fx.sign(unsigned);
        self.history.push(tx.clone());
        tx
    }

    /// An arbitrary transaction that is admissible on `snap` in block
    /// `block_index`, if one turns up within a bounded number of draws.
    pub fn admissible(&mut self, rng: &mut impl Rng, snap: &Snapshot, block_index: u64) -> Option<Transaction> {
        (0..200)
            .map(|_| self.arbitrary(rng))
            .find(|tx| admissible(tx, snap, block_index).is_ok())
    }
}

/// Random block contents admissible on `snap`, valid as a whole in replay
/// order and with unique transaction ids.
pub fn random_block_data(
    rng: &mut impl Rng,
    gen: &mut TxGen<'_>,
    snap: &Snapshot,
    max_txs: usize,
) -> BlockData {
    let index = snap.height() + 1;
    let target = rng.random_range(0..=max_txs);
    let mut data = BlockData::default();
    let mut running = snap.clone();
    let mut ids = BTreeSet::new();
    for _ in 0..target {
        let Some(tx) = gen.admissible(rng, &running, index) else {
            break;
        };
        if ids.contains(&tx.tx_id) {
            continue;
        }
        let mut trial = data.clone();
        trial.push(tx.clone());
        let mut check = snap.clone();
        if trial.iter().all(|t| check.apply_tx(t, index).is_ok()) {
            running.apply_tx(&tx, index).expect("checked admissible");
            ids.insert(tx.tx_id.clone());
            data = trial;
        }
    }
    data
}

/// A valid random chain of `blocks` blocks after genesis, with up to
/// `max_txs` transactions per block.
pub fn random_chain(
    rng: &mut impl Rng,
    fx: &Fixture,
    params: &ChainParams,
    blocks: usize,
    max_txs: usize,
) -> Vec<Block> {
    let mut gen = TxGen::new(fx);
    let mut chain = vec![params.genesis().clone()];
    let mut snap = params.genesis_snapshot();
    for _ in 0..blocks {
        let data = random_block_data(rng, &mut gen, &snap, max_txs);
        let miner = fx.members.choose(rng).expect("non-empty");
        let key = fx.key(miner.id.as_str());
        let prev = chain.last().expect("non-empty");
        gen.timestamp += 1;
        let ctx = MiningContext {
            params,
            snapshot: &snap,
            timestamp: gen.timestamp,
            exec: Exec::Sequential,
            cancel: None,
        };
        let block = mine_block(prev, data, &key, &ctx).expect("generated data is admissible");
        snap.apply_block(&block).expect("mined block applies");
        chain.push(block);
    }
    chain
}

/// Which part of a block a mutation touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Field {
    Index,
    Timestamp,
    PreviousHash,
    DigitalSign,
    Nonce,
    Hash,
    TxId,
    TxTimestamp,
    TxAuthor,
    TxSignature,
    TxStateTag,
    TxDropped,
    TxDuplicated,
}

fn flip_bit(rng: &mut impl Rng, bytes: &mut [u8]) {
    let i = rng.random_range(0..bytes.len());
    bytes[i] ^= 1 << rng.random_range(0..8);
}

/// Change exactly one field of one block, returning its index and the field.
pub fn mutate(rng: &mut impl Rng, chain: &mut [Block]) -> (usize, Field) {
    let i = rng.random_range(0..chain.len());
    let block = &mut chain[i];
    let mut fields = vec![
        Field::Index,
        Field::Timestamp,
        Field::PreviousHash,
        Field::DigitalSign,
        Field::Nonce,
        Field::Hash,
    ];
    if !block.data.is_empty() {
        fields.extend([
            Field::TxId,
            Field::TxTimestamp,
            Field::TxAuthor,
            Field::TxSignature,
            Field::TxStateTag,
            Field::TxDropped,
            Field::TxDuplicated,
        ]);
    }
    let field = *fields.choose(rng).expect("non-empty");
    let mut txs: Vec<Transaction> = block.data.iter().cloned().collect();
    let t = if txs.is_empty() { 0 } else { rng.random_range(0..txs.len()) };
    match field {
        Field::Index => block.index = block.index.wrapping_add(rng.random_range(1..u64::MAX)),
        Field::Timestamp => block.timestamp ^= 1 << rng.random_range(0..64),
        Field::PreviousHash => flip_bit(rng, &mut block.previous_hash.0),
        Field::DigitalSign => {
            let mut sig = block.digital_sign.0.clone();
            if sig.is_empty() {
                sig.push(rng.random());
            } else {
                flip_bit(rng, &mut sig);
            }
            block.digital_sign = Signature(sig);
        }
        Field::Nonce => block.nonce ^= 1 << rng.random_range(0..64),
        Field::Hash => flip_bit(rng, &mut block.hash.0),
        Field::TxId => {
            let id = format!("{}x", &txs[t].tx_id.as_str()[..txs[t].tx_id.as_str().len().min(63)]);
            txs[t].tx_id = TxId::new(id).expect("valid id");
        }
        Field::TxTimestamp => txs[t].timestamp ^= 1 << rng.random_range(0..64),
        Field::TxAuthor => {
            let other = format!("{}z", &txs[t].author.as_str()[..txs[t].author.as_str().len().min(63)]);
            txs[t].author = EntityId::new(other).expect("valid id");
        }
        Field::TxSignature => flip_bit(rng, &mut txs[t].signature.0),
        Field::TxStateTag => {
            let tags = [
                StateTag::Create,
                StateTag::Update,
                StateTag::Remove,
                StateTag::Register,
                StateTag::Request,
                StateTag::Require,
                StateTag::RequireAction,
                StateTag::AuthGrant,
                StateTag::AuthDeny,
                StateTag::AuthRevoke,
            ];
            let current = txs[t].state_tag;
            txs[t].state_tag = **tags
                .iter()
                .filter(|x| **x != current)
                .collect::<Vec<_>>()
                .choose(rng)
                .expect("non-empty");
        }
        Field::TxDropped => {
            txs.remove(t);
        }
        Field::TxDuplicated => {
            let dup = txs[t].clone();
            txs.insert(t, dup);
        }
    }
    if field >= Field::TxId {
        // Keep the mutated transactions in their sub-lists by kind.
        let mut data = BlockData::default();
        for tx in txs {
            data.push(tx);
        }
        block.data = data;
    }
    (i, field)
}
