use std::sync::atomic::{AtomicBool, Ordering};

use sha2::{Digest as _, Sha256};

use crate::crypto::{leading_zero_bits, Digest};
use crate::exec::Exec;

/// SHA-256 state over everything in the block preimage except the nonce:
/// `index ‖ timestamp ‖ previousHash ‖ canonical data`. Integers are 8-byte
/// big-endian and the nonce is appended the same way, so the preimage splits
/// into fields unambiguously.
#[derive(Clone)]
pub struct HashPrefix(Sha256);

impl HashPrefix {
    pub fn new(index: u64, timestamp: u64, previous_hash: &Digest, data: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update(index.to_be_bytes());
        h.update(timestamp.to_be_bytes());
        h.update(previous_hash.0);
        h.update(data);
        HashPrefix(h)
    }

    pub fn with_nonce(&self, nonce: u64) -> Digest {
        let mut h = self.0.clone();
        h.update(nonce.to_be_bytes());
        Digest(h.finalize().into())
    }
}

pub fn block_hash(index: u64, timestamp: u64, previous_hash: &Digest, data: &[u8], nonce: u64) -> Digest {
    HashPrefix::new(index, timestamp, previous_hash, data).with_nonce(nonce)
}

/// Lowest nonce, counting up from zero, whose hash has at least `difficulty`
/// leading zero bits. Returns `None` only when cancelled.
pub fn search_nonce(
    prefix: &HashPrefix,
    difficulty: u32,
    exec: Exec,
    cancel: Option<&AtomicBool>,
) -> Option<(u64, Digest)> {
    let width = exec.batch_width();
    let mut start = 0u64;
    loop {
        if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            return None;
        }
        let end = start.saturating_add(width);
        let found = exec.find_first_u64(start, end, |n| {
            leading_zero_bits(&prefix.with_nonce(n).0) >= difficulty
        });
        if let Some(nonce) = found {
            return Some((nonce, prefix.with_nonce(nonce)));
        }
        start = end;
    }
}
