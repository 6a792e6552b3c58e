//! Consortium-chain access control for health records: canonical encoding,
//! signed transactions, proof-of-work blocks, the access lifecycle, replayed
//! state and the peer protocol.

pub mod codec;
pub mod crypto;
pub mod exec;
pub mod ledger;
pub mod lifecycle;
pub mod mempool;
pub mod model;
pub mod snapshot;
pub mod store;
pub mod tx;
pub mod network;
#[cfg(feature = "testkit")]
pub mod testkit;
