//! Peer protocol state machine. [`Node`] performs no I/O: every handler
//! returns the messages to send and a list of notable events, and the caller
//! (the gateway runtime or the simulator) moves the bytes.

pub mod sim;
pub mod wire;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use thiserror::Error;

use crate::crypto::{Digest, KeyPair};
use crate::exec::Exec;
use crate::ledger::{
    mine_block, validate_block, validate_extension, Block, BlockData, ChainParams, MineError,
    MiningContext,
};
use crate::lifecycle::{Reason, Rejection};
use crate::mempool::{Mempool, DEFAULT_MAX_BLOCK_TXS};
use crate::model::{verify_transaction_signature, EntityId, StateTag, Transaction, TxId};
use crate::snapshot::Snapshot;

pub use wire::WireMessage;

pub type PeerId = String;

const CHECKPOINT_EVERY: u64 = 32;

#[derive(Debug, Clone, Copy)]
pub struct NodeOptions {
    pub max_block_txs: usize,
    pub exec: Exec,
}

impl Default for NodeOptions {
    fn default() -> Self {
        NodeOptions {
            max_block_txs: DEFAULT_MAX_BLOCK_TXS,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeEvent {
    /// `from` is `None` for a locally mined block.
    BlockAppended {
        index: u64,
        hash: Digest,
        from: Option<PeerId>,
    },
    ChainAdopted {
        from: PeerId,
        fork_point: u64,
        old_height: u64,
        new_height: u64,
    },
    BlockRejected {
        from: PeerId,
        index: u64,
        fault: String,
    },
    ChainRejected {
        from: PeerId,
        fault: String,
    },
    StaleBlock {
        index: u64,
    },
    ForkSeen {
        from: PeerId,
        index: u64,
    },
    TxAccepted {
        tx_id: TxId,
        tag: StateTag,
    },
    TxDropped {
        tx_id: TxId,
        tag: StateTag,
        reason: String,
    },
}

impl fmt::Display for NodeEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeEvent::BlockAppended { index, hash, from } => match from {
                Some(p) => write!(f, "appended block {index} {} from {p}", short(hash)),
                None => write!(f, "mined block {index} {}", short(hash)),
            },
            NodeEvent::ChainAdopted {
                from,
                fork_point,
                old_height,
                new_height,
            } => write!(
                f,
                "adopted chain from {from}: height {old_height} -> {new_height}, fork point {fork_point}"
            ),
            NodeEvent::BlockRejected { from, index, fault } => {
                write!(f, "rejected block {index} from {from}: {fault}")
            }
            NodeEvent::ChainRejected { from, fault } => write!(f, "rejected chain from {from}: {fault}"),
            NodeEvent::StaleBlock { index } => write!(f, "discarded stale mined block {index}"),
            NodeEvent::ForkSeen { from, index } => write!(f, "competing block {index} from {from}"),
            NodeEvent::TxAccepted { tx_id, tag } => write!(f, "accepted tx {tx_id} {}", tag.label()),
            NodeEvent::TxDropped { tx_id, tag, reason } => {
                write!(f, "dropped tx {tx_id} {}: {reason}", tag.label())
            }
        }
    }
}

fn short(d: &Digest) -> String {
    d.to_hex()[..12].to_string()
}

#[derive(Debug, Default)]
pub struct Effects {
    pub sends: Vec<(PeerId, WireMessage)>,
    pub events: Vec<NodeEvent>,
}

impl Effects {
    fn send(&mut self, to: &str, msg: WireMessage) {
        self.sends.push((to.to_string(), msg));
    }

    pub fn extend(&mut self, other: Effects) {
        self.sends.extend(other.sends);
        self.events.extend(other.events);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubmitError {
    #[error("DUPLICATE_TX: {0} already pending or on chain")]
    Duplicate(TxId),
    #[error("UNKNOWN_ENTITY: {0}")]
    UnknownEntity(EntityId),
    #[error("BAD_SIGNATURE: {0}")]
    BadSignature(TxId),
    #[error("{0}")]
    Inadmissible(Rejection),
}

impl SubmitError {
    pub fn code(&self) -> &'static str {
        match self {
            SubmitError::Duplicate(_) => "DUPLICATE_TX",
            SubmitError::UnknownEntity(_) => "UNKNOWN_ENTITY",
            SubmitError::BadSignature(_) => "BAD_SIGNATURE",
            SubmitError::Inadmissible(r) => r.reason.code(),
        }
    }
}

/// Everything needed to mine the next block away from the node, so the
/// proof-of-work search can run without holding the node.
#[derive(Clone)]
pub struct MiningJob {
    pub prev: Block,
    pub data: BlockData,
    pub snapshot: Snapshot,
    pub key: KeyPair,
    pub params: Arc<ChainParams>,
    pub timestamp: u64,
}

impl MiningJob {
    pub fn run(&self, exec: Exec, cancel: Option<&AtomicBool>) -> Result<Block, MineError> {
        let ctx = MiningContext {
            params: &self.params,
            snapshot: &self.snapshot,
            timestamp: self.timestamp,
            exec,
            cancel,
        };
        mine_block(&self.prev, self.data.clone(), &self.key, &ctx)
    }
}

pub struct Node {
    name: String,
    params: Arc<ChainParams>,
    key: Option<KeyPair>,
    chain: Vec<Block>,
    tip: Snapshot,
    checkpoints: BTreeMap<u64, Snapshot>,
    mempool: Mempool,
    provisional: Snapshot,
    peers: BTreeSet<PeerId>,
    fork_seen: bool,
    opts: NodeOptions,
}

impl Node {
    pub fn new(name: impl Into<String>, params: Arc<ChainParams>, key: Option<KeyPair>, opts: NodeOptions) -> Self {
        let chain = vec![params.genesis().clone()];
        let tip = params.genesis_snapshot();
        Self::from_validated(name, params, key, chain, tip, opts)
    }

    /// Start from a chain the caller has already validated, with `tip` its
    /// final state.
    pub fn from_validated(
        name: impl Into<String>,
        params: Arc<ChainParams>,
        key: Option<KeyPair>,
        chain: Vec<Block>,
        tip: Snapshot,
        opts: NodeOptions,
    ) -> Self {
        let mut node = Node {
            name: name.into(),
            checkpoints: BTreeMap::from([(0, params.genesis_snapshot())]),
            params,
            key,
            chain,
            provisional: tip.clone(),
            tip,
            mempool: Mempool::new(),
            peers: BTreeSet::new(),
            fork_seen: false,
            opts,
        };
        node.rebuild_checkpoints();
        node
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &Arc<ChainParams> {
        &self.params
    }

    pub fn chain(&self) -> &[Block] {
        &self.chain
    }

    pub fn tip_block(&self) -> &Block {
        self.chain.last().expect("chain always holds genesis")
    }

    pub fn height(&self) -> u64 {
        self.tip_block().index
    }

    /// State at the tip of the local chain.
    pub fn snapshot(&self) -> &Snapshot {
        &self.tip
    }

    /// Tip state with the mempool folded on top.
    pub fn provisional(&self) -> &Snapshot {
        &self.provisional
    }

    pub fn mempool(&self) -> &Mempool {
        &self.mempool
    }

    pub fn peers(&self) -> &BTreeSet<PeerId> {
        &self.peers
    }

    pub fn fork_seen(&self) -> bool {
        self.fork_seen
    }

    pub fn key(&self) -> Option<&KeyPair> {
        self.key.as_ref()
    }

    pub fn is_miner(&self) -> bool {
        self.key
            .as_ref()
            .is_some_and(|k| self.params.is_member_key(&k.public()))
    }

    /// A miner mines when it has pending work or has seen a competing block
    /// at its own height; the latter extends one branch to break the tie.
    pub fn wants_to_mine(&self) -> bool {
        self.is_miner() && (!self.mempool.is_empty() || self.fork_seen)
    }

    pub fn connect(&mut self, peer: &str) -> Effects {
        let mut fx = Effects::default();
        self.peers.insert(peer.to_string());
        fx.send(
            peer,
            WireMessage::Hello {
                node: self.name.clone(),
                height: self.height(),
            },
        );
        fx.send(peer, WireMessage::GetLatest);
        fx
    }

    pub fn disconnect(&mut self, peer: &str) {
        self.peers.remove(peer);
    }

    pub fn handle(&mut self, from: &str, msg: WireMessage) -> Effects {
        let mut fx = Effects::default();
        match msg {
            WireMessage::Hello { .. } => {}
            WireMessage::GetLatest => fx.send(from, WireMessage::Latest(self.tip_block().clone())),
            WireMessage::GetChain => fx.send(from, WireMessage::Chain(self.chain.clone())),
            WireMessage::Latest(b) | WireMessage::AnnounceBlock(b) => self.on_latest(from, b, &mut fx),
            WireMessage::Chain(blocks) => self.on_chain(from, blocks, &mut fx),
            WireMessage::SubmitTx(tx) => {
                // Gossip: rejections from peers are expected (duplicates,
                // or dependencies not yet seen here) and are not reported.
                if let Ok(more) = self.accept_tx(tx, Some(from)) {
                    fx.extend(more);
                }
            }
        }
        fx
    }

    /// Accept a client transaction into the mempool and gossip it.
    pub fn submit(&mut self, tx: Transaction) -> Result<Effects, SubmitError> {
        self.accept_tx(tx, None)
    }

    fn accept_tx(&mut self, tx: Transaction, from: Option<&str>) -> Result<Effects, SubmitError> {
        let key = tx.key();
        let known = self.mempool.contains(&key) || self.tip.contains_tx(&key.0, key.1);
        if known && from.is_some() {
            return Err(SubmitError::Duplicate(key.0));
        }
        match verify_transaction_signature(&tx, &self.tip) {
            Ok(true) => {}
            Ok(false) => return Err(SubmitError::BadSignature(key.0)),
            Err(_) => return Err(SubmitError::UnknownEntity(tx.author.clone())),
        }
        // Lifecycle rules first, so a client re-sending a vote learns it is
        // a duplicate vote rather than a duplicate transaction.
        self.provisional
            .apply_tx(&tx, self.height() + 1)
            .map_err(|r| match r.reason {
                Reason::DuplicateTx => SubmitError::Duplicate(key.0.clone()),
                _ => SubmitError::Inadmissible(r),
            })?;
        self.mempool.insert(tx.clone());
        let mut fx = Effects::default();
        fx.events.push(NodeEvent::TxAccepted {
            tx_id: key.0,
            tag: key.1,
        });
        for p in &self.peers {
            if Some(p.as_str()) != from {
                fx.send(p, WireMessage::SubmitTx(tx.clone()));
            }
        }
        Ok(fx)
    }

    /// Contents the next locally mined block would carry.
    pub fn block_template(&self) -> BlockData {
        self.mempool.select(&self.tip, self.opts.max_block_txs)
    }

    pub fn mining_job(&self, timestamp: u64) -> Option<MiningJob> {
        let key = self.key.clone().filter(|_| self.is_miner())?;
        let prev = self.tip_block().clone();
        Some(MiningJob {
            timestamp: timestamp.max(prev.timestamp),
            prev,
            data: self.block_template(),
            snapshot: self.tip.clone(),
            key,
            params: self.params.clone(),
        })
    }

    /// Mine one block synchronously on the current tip and broadcast it.
    pub fn mine(&mut self, timestamp: u64) -> Result<Effects, MineError> {
        let job = self.mining_job(timestamp).ok_or(MineError::NotMember)?;
        let block = job.run(self.opts.exec, None)?;
        Ok(self.on_mined(block))
    }

    /// Install a block produced from a [`MiningJob`]. A block whose parent is
    /// no longer the tip is discarded.
    pub fn on_mined(&mut self, block: Block) -> Effects {
        let mut fx = Effects::default();
        if block.previous_hash != self.tip_block().hash
            || validate_block(&block, self.tip_block(), &self.params, &self.tip).is_err()
        {
            fx.events.push(NodeEvent::StaleBlock { index: block.index });
            return fx;
        }
        self.append(block.clone(), &mut fx);
        fx.events.push(NodeEvent::BlockAppended {
            index: block.index,
            hash: block.hash,
            from: None,
        });
        for p in &self.peers {
            fx.send(p, WireMessage::AnnounceBlock(block.clone()));
        }
        fx
    }

    fn on_latest(&mut self, from: &str, block: Block, fx: &mut Effects) {
        let tip = self.tip_block();
        let tip_index = tip.index;
        if block.index == tip_index + 1 {
            if block.previous_hash != tip.hash {
                // Extends a branch we do not have: fetch it and let the
                // longest-chain rule decide.
                fx.send(from, WireMessage::GetChain);
                return;
            }
            if let Err(fault) = validate_block(&block, tip, &self.params, &self.tip) {
                fx.events.push(NodeEvent::BlockRejected {
                    from: from.to_string(),
                    index: block.index,
                    fault: fault.code().to_string(),
                });
                return;
            }
            self.append(block.clone(), fx);
            fx.events.push(NodeEvent::BlockAppended {
                index: block.index,
                hash: block.hash,
                from: Some(from.to_string()),
            });
            self.relay(from, &block, fx);
        } else if block.index > tip_index + 1 {
            fx.send(from, WireMessage::GetChain);
        } else if block.index == tip_index && block.hash != tip.hash && !self.fork_seen {
            self.fork_seen = true;
            fx.events.push(NodeEvent::ForkSeen {
                from: from.to_string(),
                index: block.index,
            });
        }
    }

    fn on_chain(&mut self, from: &str, candidate: Vec<Block>, fx: &mut Effects) {
        if candidate.len() <= self.chain.len() {
            return;
        }
        let reject = |fx: &mut Effects, fault: String| {
            fx.events.push(NodeEvent::ChainRejected {
                from: from.to_string(),
                fault,
            })
        };
        if candidate.first() != Some(self.params.genesis()) {
            reject(fx, "block 0: GENESIS_MISMATCH".into());
            return;
        }
        let fork = self
            .chain
            .iter()
            .zip(&candidate)
            .take_while(|(a, b)| a.hash == b.hash)
            .count()
            - 1;
        let base = self.snapshot_at(fork as u64);
        let snap = match validate_extension(&candidate, fork + 1, base, &self.params, self.opts.exec) {
            Ok(s) => s,
            Err(fault) => {
                reject(fx, fault.to_string());
                return;
            }
        };
        let old_height = self.height();
        let orphaned: Vec<Transaction> = self.chain[fork + 1..]
            .iter()
            .flat_map(|b| b.data.iter().cloned())
            .collect();
        self.chain = candidate;
        self.tip = snap;
        self.checkpoints.retain(|h, _| *h <= fork as u64);
        self.rebuild_checkpoints();
        self.fork_seen = false;
        self.mempool.prepend(orphaned);
        self.refold(fx);
        fx.events.push(NodeEvent::ChainAdopted {
            from: from.to_string(),
            fork_point: fork as u64,
            old_height,
            new_height: self.height(),
        });
        let tip = self.tip_block().clone();
        self.relay(from, &tip, fx);
    }

    fn relay(&self, from: &str, block: &Block, fx: &mut Effects) {
        for p in &self.peers {
            if p != from {
                fx.send(p, WireMessage::AnnounceBlock(block.clone()));
            }
        }
    }

    /// Append a block already checked against the tip.
    fn append(&mut self, block: Block, fx: &mut Effects) {
        self.tip
            .apply_block(&block)
            .expect("block was validated against the tip");
        if block.index % CHECKPOINT_EVERY == 0 {
            self.checkpoints.insert(block.index, self.tip.clone());
        }
        self.chain.push(block);
        self.fork_seen = false;
        self.refold(fx);
    }

    fn refold(&mut self, fx: &mut Effects) {
        let (provisional, dropped) = self.mempool.revalidate(&self.tip);
        self.provisional = provisional;
        for (tx, rej) in dropped {
            fx.events.push(NodeEvent::TxDropped {
                tx_id: tx.tx_id,
                tag: tx.state_tag,
                reason: rej.reason.code().to_string(),
            });
        }
    }

    fn rebuild_checkpoints(&mut self) {
        let mut from = *self.checkpoints.keys().next_back().unwrap_or(&0);
        let mut snap = self.checkpoints[&from].clone();
        let target = self.height() - self.height() % CHECKPOINT_EVERY;
        while from < target {
            for block in &self.chain[from as usize + 1..=(from + CHECKPOINT_EVERY) as usize] {
                snap.apply_block(block).expect("chain was validated");
            }
            from += CHECKPOINT_EVERY;
            self.checkpoints.insert(from, snap.clone());
        }
    }

    /// State after block `height` of the local chain.
    pub fn snapshot_at(&self, height: u64) -> Snapshot {
        if height == self.height() {
            return self.tip.clone();
        }
        let (&base, snap) = self
            .checkpoints
            .range(..=height)
            .next_back()
            .expect("genesis checkpoint present");
        let mut snap = snap.clone();
        for block in &self.chain[base as usize + 1..=height as usize] {
            snap.apply_block(block).expect("chain was validated");
        }
        snap
    }
}
