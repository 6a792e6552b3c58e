//! Blocks, proof-of-work mining, signing and chain validation.

mod pow;
mod validate;

use std::collections::BTreeSet;
use std::sync::atomic::AtomicBool;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{canonical_encode, Canon, Canonical, EncodeError};
use crate::crypto::{Digest, KeyPair, PublicKey, Signature};
use crate::exec::Exec;
use crate::lifecycle::Rejection;
use crate::model::{Entity, EntityDirectory, Role, Transaction, TxKind};
use crate::snapshot::Snapshot;

pub use pow::{block_hash, search_nonce, HashPrefix};
pub use validate::{
    check_structure, validate_block, validate_chain, validate_chain_with, validate_extension,
    BlockFault, ChainFault,
};

pub const MAX_DIFFICULTY: u32 = 32;
pub const DEFAULT_DIFFICULTY: u32 = 16;

/// Transactions carried by a block, split by kind.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockData {
    pub records: Vec<Transaction>,
    pub policies: Vec<Transaction>,
    pub individual_auths: Vec<Transaction>,
}

impl BlockData {
    /// Place a transaction in the sub-list matching its kind.
    pub fn push(&mut self, tx: Transaction) {
        match tx.kind {
            TxKind::RecordOp => self.records.push(tx),
            TxKind::PolicyOp => self.policies.push(tx),
            TxKind::IndividualAuth => self.individual_auths.push(tx),
        }
    }

    pub fn from_txs(txs: impl IntoIterator<Item = Transaction>) -> Self {
        let mut d = BlockData::default();
        for tx in txs {
            d.push(tx);
        }
        d
    }

    /// Transactions in replay order: records, policies, individual auths.
    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.records
            .iter()
            .chain(&self.policies)
            .chain(&self.individual_auths)
    }

    pub fn len(&self) -> usize {
        self.records.len() + self.policies.len() + self.individual_auths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        canonical_encode(self)
    }
}

impl Canonical for BlockData {
    fn canon(&self) -> Canon {
        let list = |txs: &[Transaction]| Canon::Arr(txs.iter().map(Canonical::canon).collect());
        Canon::obj([
            ("individualAuths", list(&self.individual_auths)),
            ("policies", list(&self.policies)),
            ("records", list(&self.records)),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Block {
    pub index: u64,
    pub timestamp: u64,
    pub previous_hash: Digest,
    pub digital_sign: Signature,
    pub data: BlockData,
    pub nonce: u64,
    pub hash: Digest,
}

impl Block {
    pub fn compute_hash(&self) -> Result<Digest, EncodeError> {
        let data = self.data.encode()?;
        Ok(block_hash(self.index, self.timestamp, &self.previous_hash, &data, self.nonce))
    }

    /// Canonical encoding of the whole block, as written to the block store.
    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        canonical_encode(self)
    }

    /// Inverse of [`Block::encode`]; rejects any non-canonical input.
    pub fn decode(bytes: &[u8]) -> Option<Block> {
        let block: Block = serde_json::from_slice(bytes).ok()?;
        (block.encode().ok()? == bytes).then_some(block)
    }
}

impl Canonical for Block {
    fn canon(&self) -> Canon {
        Canon::obj([
            ("data", self.data.canon()),
            ("digitalSign", Canon::bytes(&self.digital_sign.0)),
            ("hash", Canon::str(self.hash.to_hex())),
            ("index", Canon::Int(self.index)),
            ("nonce", Canon::Int(self.nonce)),
            ("previousHash", Canon::str(self.previous_hash.to_hex())),
            ("timestamp", Canon::Int(self.timestamp)),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("genesis needs at least one consortium member")]
    NoMembers,
    #[error("member {0} must have role CONSORTIUM_NODE")]
    MemberRole(String),
    #[error("consortium node {0} listed outside the member set")]
    StrayMember(String),
    #[error("duplicate entity id {0}")]
    Duplicate(String),
    #[error("difficulty {0} outside 0..={MAX_DIFFICULTY}")]
    Difficulty(u32),
}

/// Network-wide constants fixed at genesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenesisConfig {
    pub timestamp: u64,
    pub difficulty: u32,
    pub members: Vec<Entity>,
    #[serde(default)]
    pub entities: Vec<Entity>,
}

impl GenesisConfig {
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.members.is_empty() {
            return Err(ConfigError::NoMembers);
        }
        if self.difficulty > MAX_DIFFICULTY {
            return Err(ConfigError::Difficulty(self.difficulty));
        }
        let mut seen = BTreeSet::new();
        for m in &self.members {
            if m.role != Role::ConsortiumNode {
                return Err(ConfigError::MemberRole(m.id.to_string()));
            }
            if !seen.insert(&m.id) {
                return Err(ConfigError::Duplicate(m.id.to_string()));
            }
        }
        for e in &self.entities {
            if e.role == Role::ConsortiumNode {
                return Err(ConfigError::StrayMember(e.id.to_string()));
            }
            if !seen.insert(&e.id) {
                return Err(ConfigError::Duplicate(e.id.to_string()));
            }
        }
        Ok(())
    }
}

impl Canonical for GenesisConfig {
    fn canon(&self) -> Canon {
        let list = |es: &[Entity]| Canon::Arr(es.iter().map(Canonical::canon).collect());
        Canon::obj([
            ("difficulty", Canon::Int(u64::from(self.difficulty))),
            ("entities", list(&self.entities)),
            ("members", list(&self.members)),
            ("timestamp", Canon::Int(self.timestamp)),
        ])
    }
}

/// Genesis block: index 0, zero parent, empty data, mined at the configured
/// difficulty. Nobody signs it; its `digitalSign` field carries the SHA-256
/// of the canonical configuration instead, so consortia with different
/// member sets never share a genesis block. Deterministic in the
/// configuration.
pub fn make_genesis(config: &GenesisConfig) -> Block {
    let data = BlockData::default();
    let encoded = data.encode().expect("empty data is encodable");
    let prefix = HashPrefix::new(0, config.timestamp, &Digest::ZERO, &encoded);
    let (nonce, hash) = search_nonce(&prefix, config.difficulty, Exec::default(), None)
        .expect("uncancelled search always succeeds");
    Block {
        index: 0,
        timestamp: config.timestamp,
        previous_hash: Digest::ZERO,
        digital_sign: Signature(Digest::of(&canonical_encode(config).expect("config is encodable")).0.to_vec()),
        data,
        nonce,
        hash,
    }
}

/// Validated genesis configuration together with its genesis block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainParams {
    config: GenesisConfig,
    genesis: Block,
}

impl ChainParams {
    pub fn new(config: GenesisConfig) -> Result<Self, ConfigError> {
        config.check()?;
        let genesis = make_genesis(&config);
        Ok(ChainParams { config, genesis })
    }

    pub fn config(&self) -> &GenesisConfig {
        &self.config
    }

    pub fn genesis(&self) -> &Block {
        &self.genesis
    }

    pub fn difficulty(&self) -> u32 {
        self.config.difficulty
    }

    pub fn members(&self) -> &[Entity] {
        &self.config.members
    }

    pub fn is_member_key(&self, key: &PublicKey) -> bool {
        self.config.members.iter().any(|m| m.public_key == *key)
    }

    /// Whether `sig` over `message` was produced by some consortium member.
    pub fn member_signed(&self, message: &[u8], sig: &Signature) -> bool {
        self.config
            .members
            .iter()
            .any(|m| m.public_key.verify(message, sig))
    }

    pub fn genesis_snapshot(&self) -> Snapshot {
        Snapshot::genesis(&self.config)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MineError {
    #[error("INVALID_TX: {tx_id}: {detail}")]
    InvalidTx { tx_id: String, detail: String },
    #[error("NOT_MEMBER: mining key is not a consortium member key")]
    NotMember,
    #[error("mining cancelled")]
    Cancelled,
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

impl MineError {
    fn invalid(tx: &Transaction, detail: impl Into<String>) -> Self {
        MineError::InvalidTx {
            tx_id: tx.tx_id.to_string(),
            detail: detail.into(),
        }
    }
}

/// Inputs to [`mine_block`] besides the block contents.
pub struct MiningContext<'a> {
    pub params: &'a ChainParams,
    /// State at `prev`.
    pub snapshot: &'a Snapshot,
    pub timestamp: u64,
    pub exec: Exec,
    pub cancel: Option<&'a AtomicBool>,
}

/// Validate `data` against the snapshot at `prev` and search for the lowest
/// nonce meeting the difficulty.
pub fn mine_block(
    prev: &Block,
    data: BlockData,
    miner: &KeyPair,
    ctx: &MiningContext<'_>,
) -> Result<Block, MineError> {
    if !ctx.params.is_member_key(&miner.public()) {
        return Err(MineError::NotMember);
    }
    let index = prev.index + 1;
    check_data(&data, ctx.snapshot, index)?;

    seal_block(prev, data, miner, ctx.timestamp, ctx.params.difficulty(), ctx.exec, ctx.cancel)
}

/// Sign `data` and search for the lowest nonce meeting `difficulty`, with no
/// membership or admissibility checks.
pub fn seal_block(
    prev: &Block,
    data: BlockData,
    miner: &KeyPair,
    timestamp: u64,
    difficulty: u32,
    exec: Exec,
    cancel: Option<&AtomicBool>,
) -> Result<Block, MineError> {
    let index = prev.index + 1;
    let encoded = data.encode()?;
    let digital_sign = miner.sign(&encoded);
    let prefix = HashPrefix::new(index, timestamp, &prev.hash, &encoded);
    let (nonce, hash) = search_nonce(&prefix, difficulty, exec, cancel).ok_or(MineError::Cancelled)?;
    Ok(Block {
        index,
        timestamp,
        previous_hash: prev.hash,
        digital_sign,
        data,
        nonce,
        hash,
    })
}

fn check_data(data: &BlockData, snapshot: &Snapshot, index: u64) -> Result<(), MineError> {
    let lists = [
        (TxKind::RecordOp, &data.records),
        (TxKind::PolicyOp, &data.policies),
        (TxKind::IndividualAuth, &data.individual_auths),
    ];
    for (kind, txs) in lists {
        if let Some(tx) = txs.iter().find(|t| t.kind != kind) {
            return Err(MineError::invalid(tx, "placed in the wrong sub-list"));
        }
    }
    let mut ids = BTreeSet::new();
    if let Some(tx) = data.iter().find(|t| !ids.insert(&t.tx_id)) {
        return Err(MineError::invalid(tx, "transaction id appears twice in one block"));
    }
    let mut running = snapshot.clone();
    for tx in data.iter() {
        match running.entity(&tx.author) {
            Some(e) if tx.verify_with(&e.public_key) => {}
            Some(_) => return Err(MineError::invalid(tx, "signature does not verify")),
            None => return Err(MineError::invalid(tx, "author is not registered")),
        }
        running
            .apply_tx(tx, index)
            .map_err(|r: Rejection| MineError::invalid(tx, r.to_string()))?;
    }
    Ok(())
}
