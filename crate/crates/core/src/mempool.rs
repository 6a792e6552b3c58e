//! Pending transactions, deduplicated by `(txId, stateTag)` and kept in
//! arrival order.

use std::collections::BTreeSet;

use indexmap::IndexMap;

use crate::ledger::BlockData;
use crate::lifecycle::Rejection;
use crate::model::{Transaction, TxKey};
use crate::snapshot::Snapshot;

pub const DEFAULT_MAX_BLOCK_TXS: usize = 256;

#[derive(Debug, Clone, Default)]
pub struct Mempool {
    entries: IndexMap<TxKey, Transaction>,
}

impl Mempool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &TxKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.entries.values()
    }

    /// Returns false when an entry with the same key is already pending.
    pub fn insert(&mut self, tx: Transaction) -> bool {
        let key = tx.key();
        if self.entries.contains_key(&key) {
            return false;
        }
        self.entries.insert(key, tx);
        true
    }

    /// Replace the contents with `front` followed by the current entries,
    /// keeping the first occurrence of each key.
    pub fn prepend(&mut self, front: Vec<Transaction>) {
        let rest = std::mem::take(&mut self.entries);
        for tx in front.into_iter().chain(rest.into_values()) {
            self.insert(tx);
        }
    }

    /// Drop everything already on chain, then refold the rest over `tip` and
    /// drop entries that are no longer admissible. Returns the provisional
    /// snapshot and the dropped entries.
    pub fn revalidate(&mut self, tip: &Snapshot) -> (Snapshot, Vec<(Transaction, Rejection)>) {
        self.entries
            .retain(|(id, tag), _| !tip.contains_tx(id, *tag));
        let (provisional, rejected) = tip.provisional(self.entries.values());
        let dropped: Vec<(Transaction, Rejection)> =
            rejected.into_iter().map(|(t, r)| (t.clone(), r)).collect();
        for (tx, _) in &dropped {
            self.entries.shift_remove(&tx.key());
        }
        (provisional, dropped)
    }

    /// Assemble block contents on top of `tip`: one pass per sub-list in
    /// replay order, taking every entry that is admissible against the
    /// running state and whose id is not yet used in this block. Entries
    /// skipped here stay pending for a later block.
    pub fn select(&self, tip: &Snapshot, max_txs: usize) -> BlockData {
        let height = tip.height() + 1;
        let mut running = tip.clone();
        let mut data = BlockData::default();
        let mut ids = BTreeSet::new();
        for kind in [
            crate::model::TxKind::RecordOp,
            crate::model::TxKind::PolicyOp,
            crate::model::TxKind::IndividualAuth,
        ] {
            for tx in self.entries.values().filter(|t| t.kind == kind) {
                if data.len() >= max_txs {
                    return data;
                }
                if ids.contains(&tx.tx_id) {
                    continue;
                }
                if running.apply_tx(tx, height).is_ok() {
                    ids.insert(tx.tx_id.clone());
                    data.push(tx.clone());
                }
            }
        }
        data
    }
}
