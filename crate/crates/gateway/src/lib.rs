//! HTTP gateway and node runtime.
//!
//! The gateway is the enforcement point in front of one consortium node: it
//! answers access requests from the mined snapshot, turns keeper and
//! custodian actions into signed transactions, and hosts the node's peer
//! transport, block store and miner.

pub mod api;
pub mod client;
pub mod clock;
pub mod config;
pub mod keys;
pub mod runtime;
pub mod transport;
pub mod types;

pub use client::{Client, ClientError};
pub use config::{GatewayConfig, NodeSetup};
pub use runtime::{start, Running, StartError};
