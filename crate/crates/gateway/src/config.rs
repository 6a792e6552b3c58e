//! Node configuration: one TOML file plus overrides applied by the caller.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ledgergate_core::crypto::KeyPair;
use ledgergate_core::exec::Exec;
use ledgergate_core::ledger::{ChainParams, GenesisConfig};
use ledgergate_core::mempool::DEFAULT_MAX_BLOCK_TXS;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::keys::{self, KeyFileError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("CONFIG_INVALID: {path}: {detail}")]
    Invalid { path: PathBuf, detail: String },
    #[error("CONFIG_INVALID: missing `{0}` (set it in the config file or with a flag)")]
    Missing(&'static str),
    #[error(transparent)]
    Key(#[from] KeyFileError),
}

fn invalid(path: &Path, detail: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

/// On-disk configuration. Relative paths are resolved against the directory
/// holding the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub name: Option<String>,
    /// Secret key file of this node.
    pub key: Option<PathBuf>,
    /// Genesis configuration as JSON.
    pub genesis: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub http_listen: Option<String>,
    pub p2p_listen: Option<String>,
    #[serde(default)]
    pub peers: Vec<String>,
    /// Overrides the genesis difficulty.
    pub difficulty: Option<u32>,
    pub mine: Option<bool>,
    pub max_block_txs: Option<usize>,
}

impl GatewayConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| invalid(path, e))?;
        let mut cfg: GatewayConfig = toml::from_str(&text).map_err(|e| invalid(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.key, &mut cfg.genesis, &mut cfg.data_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Fields set in `other` replace ours; peers are replaced when `other`
    /// lists any.
    pub fn merge(mut self, other: GatewayConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(name, key, genesis, data_dir, http_listen, p2p_listen, difficulty, mine, max_block_txs);
        if !other.peers.is_empty() {
            self.peers = other.peers;
        }
        self
    }

    /// Chain parameters from the genesis file and difficulty override.
    pub fn resolve_params(&self) -> Result<ChainParams, ConfigError> {
        let genesis_path = self.genesis.as_ref().ok_or(ConfigError::Missing("genesis"))?;
        let text = fs::read_to_string(genesis_path).map_err(|e| invalid(genesis_path, e))?;
        let mut genesis: GenesisConfig = serde_json::from_str(&text).map_err(|e| invalid(genesis_path, e))?;
        if let Some(d) = self.difficulty {
            genesis.difficulty = d;
        }
        ChainParams::new(genesis).map_err(|e| invalid(genesis_path, e))
    }

    pub fn resolve(self) -> Result<NodeSetup, ConfigError> {
        let params = self.resolve_params()?;
        let key = self.key.as_deref().map(keys::read_secret).transpose()?;
        let name = self
            .name
            .or_else(|| key.as_ref().map(|k| k.entity_id().to_string()))
            .unwrap_or_else(|| "node".into());
        Ok(NodeSetup {
            name,
            key,
            params,
            data_dir: self.data_dir.ok_or(ConfigError::Missing("data_dir"))?,
            http_listen: self.http_listen.unwrap_or_else(|| "127.0.0.1:8080".into()),
            p2p_listen: self.p2p_listen,
            peers: self.peers,
            mine: self.mine.unwrap_or(true),
            max_block_txs: self.max_block_txs.unwrap_or(DEFAULT_MAX_BLOCK_TXS),
            exec: Exec::default(),
            clock: Arc::new(SystemClock),
        })
    }
}

/// Fully resolved settings for [`crate::start`].
#[derive(Clone)]
pub struct NodeSetup {
    pub name: String,
    /// `None`, or a key outside the member set, runs the node read-only.
    pub key: Option<KeyPair>,
    pub params: ChainParams,
    pub data_dir: PathBuf,
    pub http_listen: String,
    /// Peer listener; `None` disables inbound peer connections.
    pub p2p_listen: Option<String>,
    pub peers: Vec<String>,
    pub mine: bool,
    pub max_block_txs: usize,
    pub exec: Exec,
    pub clock: Arc<dyn Clock>,
}

impl NodeSetup {
    pub fn store_path(&self) -> PathBuf {
        self.data_dir.join("chain.bin")
    }
}
