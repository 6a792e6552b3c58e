//! Append-only block store: one file of length-prefixed canonical block
//! encodings (4-byte big-endian length, then the bytes).

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::crypto::Digest;
use crate::ledger::{validate_chain, validate_block, Block, ChainFault, ChainParams};
use crate::snapshot::Snapshot;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("IO_FAILURE: {0}")]
    Io(#[from] io::Error),
    #[error("CORRUPT_STORE: {0}")]
    Corrupt(String),
    #[error("CORRUPT_STORE: {0}")]
    Invalid(ChainFault),
    #[error("block rejected before write: {0}")]
    Rejected(String),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::Io(_) => "IO_FAILURE",
            StoreError::Corrupt(_) | StoreError::Invalid(_) => "CORRUPT_STORE",
            StoreError::Rejected(_) => "INVALID_BLOCK",
        }
    }
}

pub struct BlockStore {
    path: PathBuf,
    file: File,
    hashes: Vec<Digest>,
}

impl BlockStore {
    /// Open `path`, creating it with just the genesis block if absent.
    /// Returns the stored chain after full validation.
    pub fn open(path: impl AsRef<Path>, params: &ChainParams) -> Result<(Self, Vec<Block>, Snapshot), StoreError> {
        let path = path.as_ref().to_path_buf();
        if !path.exists() {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            write_all_blocks(&path, std::slice::from_ref(params.genesis()))?;
        }
        let blocks = read_blocks(&path)?;
        let snap = validate_chain(&blocks, params).map_err(StoreError::Invalid)?;
        let file = OpenOptions::new().append(true).open(&path)?;
        let hashes = blocks.iter().map(|b| b.hash).collect();
        Ok((BlockStore { path, file, hashes }, blocks, snap))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }

    /// Validate `block` against the stored tip and append it durably.
    pub fn append(
        &mut self,
        block: &Block,
        tip: &Block,
        tip_snapshot: &Snapshot,
        params: &ChainParams,
    ) -> Result<(), StoreError> {
        if self.hashes.last() != Some(&tip.hash) {
            return Err(StoreError::Rejected("tip does not match stored chain".into()));
        }
        validate_block(block, tip, params, tip_snapshot)
            .map_err(|f| StoreError::Rejected(f.to_string()))?;
        self.write_frame(block)
    }

    fn write_frame(&mut self, block: &Block) -> Result<(), StoreError> {
        let frame = frame(block)?;
        self.file.write_all(&frame)?;
        self.file.sync_data()?;
        self.hashes.push(block.hash);
        Ok(())
    }

    /// Bring the file in line with an already validated `chain`: append the
    /// missing suffix when the stored blocks are a prefix, otherwise replace
    /// the file atomically.
    pub fn sync_to(&mut self, chain: &[Block]) -> Result<(), StoreError> {
        let n = self.hashes.len();
        let is_prefix = n <= chain.len()
            && chain.iter().zip(&self.hashes).all(|(b, h)| b.hash == *h);
        if is_prefix {
            for block in &chain[n..] {
                self.write_frame(block)?;
            }
            return Ok(());
        }
        let tmp = self.path.with_extension("rewrite");
        write_all_blocks(&tmp, chain)?;
        fs::rename(&tmp, &self.path)?;
        self.file = OpenOptions::new().append(true).open(&self.path)?;
        self.hashes = chain.iter().map(|b| b.hash).collect();
        Ok(())
    }
}

fn frame(block: &Block) -> Result<Vec<u8>, StoreError> {
    let bytes = block
        .encode()
        .map_err(|e| StoreError::Rejected(e.to_string()))?;
    let len = u32::try_from(bytes.len()).map_err(|_| StoreError::Rejected("block too large".into()))?;
    let mut out = Vec::with_capacity(bytes.len() + 4);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&bytes);
    Ok(out)
}

fn write_all_blocks(path: &Path, blocks: &[Block]) -> Result<(), StoreError> {
    let mut f = File::create(path)?;
    for b in blocks {
        f.write_all(&frame(b)?)?;
    }
    f.sync_all()?;
    Ok(())
}

/// Decode every frame in the file. Any truncated or non-canonical frame is
/// `CORRUPT_STORE`; no chain validation happens here.
pub fn read_blocks(path: &Path) -> Result<Vec<Block>, StoreError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut blocks = Vec::new();
    let mut at = 0usize;
    while at < bytes.len() {
        let Some(len_bytes) = bytes.get(at..at + 4) else {
            return Err(StoreError::Corrupt(format!("truncated length prefix at byte {at}")));
        };
        let len = u32::from_be_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
        let Some(body) = bytes.get(at + 4..at + 4 + len) else {
            return Err(StoreError::Corrupt(format!(
                "frame {} truncated: wanted {len} bytes at offset {}",
                blocks.len(),
                at + 4
            )));
        };
        let block = Block::decode(body)
            .ok_or_else(|| StoreError::Corrupt(format!("frame {} is not a canonical block", blocks.len())))?;
        blocks.push(block);
        at += 4 + len;
    }
    if blocks.is_empty() {
        return Err(StoreError::Corrupt("empty store".into()));
    }
    Ok(blocks)
}
