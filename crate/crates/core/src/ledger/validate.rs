use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Block, ChainParams};
use crate::crypto::{Digest, PublicKey};
use crate::exec::Exec;
use crate::lifecycle::Reason;
use crate::model::{EntityDirectory, EntityId, Payload, StateTag, TxKind};
use crate::snapshot::Snapshot;

/// First check a block failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BlockFault {
    GenesisMismatch,
    BadIndex,
    BadPreviousHash,
    HashMismatch,
    InsufficientWork,
    NotMember,
    MisplacedTx,
    DuplicateTxInBlock,
    BadTxSignature,
    Unencodable,
    Inadmissible(Reason),
}

impl BlockFault {
    pub fn code(&self) -> &'static str {
        match self {
            BlockFault::GenesisMismatch => "GENESIS_MISMATCH",
            BlockFault::BadIndex => "BAD_INDEX",
            BlockFault::BadPreviousHash => "BAD_PREVIOUS_HASH",
            BlockFault::HashMismatch => "HASH_MISMATCH",
            BlockFault::InsufficientWork => "INSUFFICIENT_WORK",
            BlockFault::NotMember => "NOT_MEMBER",
            BlockFault::MisplacedTx => "MISPLACED_TX",
            BlockFault::DuplicateTxInBlock => "DUPLICATE_TX_IN_BLOCK",
            BlockFault::BadTxSignature => "BAD_TX_SIGNATURE",
            BlockFault::Unencodable => "ENCODE_UNREPRESENTABLE",
            BlockFault::Inadmissible(r) => r.code(),
        }
    }
}

impl fmt::Display for BlockFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("block {index}: {fault}")]
#[serde(rename_all = "camelCase")]
pub struct ChainFault {
    pub index: u64,
    pub fault: BlockFault,
}

/// Checks that need only the block, its parent hash and the chain
/// parameters: index, linkage, hash, work, miner signature, placement and
/// per-block transaction id uniqueness.
pub fn check_structure(
    block: &Block,
    expected_index: u64,
    prev_hash: &Digest,
    params: &ChainParams,
) -> Result<(), BlockFault> {
    if block.index != expected_index {
        return Err(BlockFault::BadIndex);
    }
    if block.previous_hash != *prev_hash {
        return Err(BlockFault::BadPreviousHash);
    }
    let data = block.data.encode().map_err(|_| BlockFault::Unencodable)?;
    let hash = super::block_hash(block.index, block.timestamp, &block.previous_hash, &data, block.nonce);
    if hash != block.hash {
        return Err(BlockFault::HashMismatch);
    }
    if hash.leading_zero_bits() < params.difficulty() {
        return Err(BlockFault::InsufficientWork);
    }
    if !params.member_signed(&data, &block.digital_sign) {
        return Err(BlockFault::NotMember);
    }
    let placed = block.data.records.iter().all(|t| t.kind == TxKind::RecordOp)
        && block.data.policies.iter().all(|t| t.kind == TxKind::PolicyOp)
        && block
            .data
            .individual_auths
            .iter()
            .all(|t| t.kind == TxKind::IndividualAuth);
    if !placed {
        return Err(BlockFault::MisplacedTx);
    }
    let mut ids = BTreeSet::new();
    if !block.data.iter().all(|t| ids.insert(&t.tx_id)) {
        return Err(BlockFault::DuplicateTxInBlock);
    }
    Ok(())
}

/// Full check of `block` on top of `prev`, with `snap` the state at `prev`.
pub fn validate_block(
    block: &Block,
    prev: &Block,
    params: &ChainParams,
    snap: &Snapshot,
) -> Result<(), BlockFault> {
    check_structure(block, prev.index + 1, &prev.hash, params)?;
    for tx in block.data.iter() {
        match snap.entity(&tx.author) {
            Some(e) if tx.verify_with(&e.public_key) => {}
            Some(_) => return Err(BlockFault::BadTxSignature),
            None => return Err(BlockFault::Inadmissible(Reason::UnknownEntity)),
        }
    }
    let mut running = snap.clone();
    running
        .apply_block(block)
        .map_err(|e| match e {
            crate::snapshot::ReplayError::Inconsistent { rejection, .. } => {
                BlockFault::Inadmissible(rejection.reason)
            }
            crate::snapshot::ReplayError::OutOfOrder { .. } => BlockFault::BadIndex,
        })
}

/// Validate a whole chain, returning the snapshot at its tip.
pub fn validate_chain(blocks: &[Block], params: &ChainParams) -> Result<Snapshot, ChainFault> {
    validate_chain_with(blocks, params, Exec::default())
}

/// Validate a whole chain with the given execution strategy.
pub fn validate_chain_with(
    blocks: &[Block],
    params: &ChainParams,
    exec: Exec,
) -> Result<Snapshot, ChainFault> {
    match blocks.first() {
        Some(g) if g == params.genesis() => {}
        _ => {
            return Err(ChainFault {
                index: 0,
                fault: BlockFault::GenesisMismatch,
            })
        }
    }
    validate_extension(blocks, 1, params.genesis_snapshot(), params, exec)
}

/// Validate `blocks[from..]` given that `blocks[..from]` is already valid and
/// `base` is the state at `blocks[from - 1]`.
///
/// Three passes: structural checks per block (data-parallel), transaction
/// signatures against the keys registered before each block
/// (data-parallel), then a sequential lifecycle replay. The reported fault is
/// the one at the lowest block index.
pub fn validate_extension(
    blocks: &[Block],
    from: usize,
    base: Snapshot,
    params: &ChainParams,
    exec: Exec,
) -> Result<Snapshot, ChainFault> {
    assert!(from >= 1 && from <= blocks.len(), "extension must start after genesis");
    debug_assert_eq!(base.height(), blocks[from - 1].index);
    let fault = |index: usize, fault: BlockFault| ChainFault {
        index: index as u64,
        fault,
    };

    let structural = exec.find_map_first(blocks.len() - from, |i| {
        let i = i + from;
        check_structure(&blocks[i], i as u64, &blocks[i - 1].hash, params).err()
    });
    let mut limit = blocks.len();
    let mut first: Option<ChainFault> = None;
    if let Some((i, f)) = structural {
        limit = i + from;
        first = Some(fault(i + from, f));
    }

    let keys = KeyHistory::build(&base, &blocks[from..limit]);
    let signatures = exec.find_map_first(limit - from, |i| {
        let i = i + from;
        blocks[i].data.iter().find_map(|tx| match keys.key_before(&tx.author, i as u64) {
            Some(pk) if tx.verify_with(pk) => None,
            Some(_) => Some(BlockFault::BadTxSignature),
            None => Some(BlockFault::Inadmissible(Reason::UnknownEntity)),
        })
    });
    if let Some((i, f)) = signatures {
        limit = i + from;
        first = Some(fault(i + from, f));
    }

    let mut snap = base;
    for (i, block) in blocks.iter().enumerate().take(limit).skip(from) {
        if let Err(e) = snap.apply_block(block) {
            let reason = match e {
                crate::snapshot::ReplayError::Inconsistent { rejection, .. } => {
                    BlockFault::Inadmissible(rejection.reason)
                }
                crate::snapshot::ReplayError::OutOfOrder { .. } => BlockFault::BadIndex,
            };
            return Err(fault(i, reason));
        }
    }
    match first {
        Some(f) => Err(f),
        None => Ok(snap),
    }
}

/// Public keys by entity with the height at which each became known,
/// gathered from the base state and later `REGISTER` payloads. Whether a registration was
/// itself legal is decided by the replay pass.
struct KeyHistory {
    keys: BTreeMap<EntityId, (PublicKey, u64)>,
}

impl KeyHistory {
    fn build(base: &Snapshot, blocks: &[Block]) -> Self {
        let mut keys: BTreeMap<EntityId, (PublicKey, u64)> = base
            .entities()
            .map(|r| (r.entity.id.clone(), (r.entity.public_key, r.height)))
            .collect();
        for block in blocks {
            for tx in &block.data.records {
                if let (StateTag::Register, Payload::Registration(e)) = (tx.state_tag, &tx.payload) {
                    keys.entry(e.id.clone()).or_insert((e.public_key, block.index));
                }
            }
        }
        KeyHistory { keys }
    }

    fn key_before(&self, id: &EntityId, height: u64) -> Option<&PublicKey> {
        self.keys
            .get(id)
            .filter(|(_, at)| *at < height)
            .map(|(pk, _)| pk)
    }
}
