#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use ledgergate_core::crypto::KeyPair;
use ledgergate_core::exec::Exec;
use ledgergate_core::model::{AgreementRule, EntityId, PermissionLevel, RecordId, RequestId, TxId};
use ledgergate_core::testkit::{Fixture, GENESIS_TIMESTAMP};
use ledgergate_gateway::clock::ManualClock;
use ledgergate_gateway::types::*;
use ledgergate_gateway::{start, Client, NodeSetup, Running};

pub const D: u32 = 4;

pub fn id(s: &str) -> EntityId {
    Fixture::id(s)
}

pub fn rid(s: &str) -> RecordId {
    RecordId::new(s).unwrap()
}

pub fn qid(s: &str) -> RequestId {
    RequestId::new(s).unwrap()
}

pub fn setup(fx: &Fixture, member: Option<&str>, data_dir: PathBuf, clock: &ManualClock, mine: bool) -> NodeSetup {
    NodeSetup {
        name: member.unwrap_or("reader").to_string(),
        key: member.map(|m| fx.key(m)),
        params: fx.params(D),
        data_dir,
        http_listen: "127.0.0.1:0".into(),
        p2p_listen: Some("127.0.0.1:0".into()),
        peers: vec![],
        mine,
        max_block_txs: 64,
        exec: Exec::default(),
        clock: Arc::new(clock.clone()),
    }
}

/// One gateway on a fresh store with a clock under test control. Mining is
/// driven explicitly through [`Gw::mine_all`].
pub struct Gw {
    pub fx: Fixture,
    pub run: Running,
    pub client: Client,
    pub clock: ManualClock,
    pub dir: tempfile::TempDir,
}

impl Gw {
    pub async fn start() -> Self {
        let fx = Fixture::new(40);
        let dir = tempfile::tempdir().unwrap();
        let clock = ManualClock::new(GENESIS_TIMESTAMP + 10);
        let run = start(setup(&fx, Some("m1"), dir.path().join("n1"), &clock, false)).await.unwrap();
        let client = Client::new(run.base_url());
        Gw { fx, run, client, clock, dir }
    }

    pub fn key(&self, name: &str) -> KeyPair {
        self.fx.key(name)
    }

    pub fn now(&self) -> u64 {
        self.clock.now_secs()
    }

    /// Mine until the mempool is empty.
    pub async fn mine_all(&self) {
        for _ in 0..16 {
            if self.client.status().await.unwrap().mempool == 0 {
                return;
            }
            self.clock.advance(1);
            self.run.shared.mine_once().await.unwrap();
        }
        panic!("mempool did not drain");
    }

    pub fn record(&self, record: &str, rule: AgreementRule, keepers: &[&str]) -> RecordBody {
        RecordBody {
            tx_id: TxId::new(format!("c-{record}-{}", self.now())).unwrap(),
            author: id(keepers[0]),
            record_id: rid(record),
            keepers: keepers.iter().map(|k| id(k)).collect(),
            agreement: rule,
            location: format!("ehr://hospital/{record}"),
            timestamp: self.now(),
        }
    }

    pub async fn create(&self, record: &str, rule: AgreementRule, keepers: &[&str]) {
        let body = self.record(record, rule, keepers);
        self.client.create_record(&body, &self.key(keepers[0])).await.unwrap();
    }

    pub fn access(&self, q: &str, party: &str, record: &str, level: PermissionLevel) -> AccessRequestBody {
        AccessRequestBody {
            request_id: qid(q),
            party: id(party),
            record: rid(record),
            level,
            expiry: None,
            timestamp: self.now(),
        }
    }

    pub async fn vote(&self, q: &str, keeper: &str, verdict: Verdict) -> Result<RequestStatusBody, ledgergate_gateway::ClientError> {
        let body = AuthorizationBody {
            request_id: qid(q),
            keeper: id(keeper),
            verdict,
            timestamp: self.now(),
        };
        self.client.authorize(&body, &self.key(keeper)).await
    }

    pub async fn revoke(&self, q: &str, keeper: &str) -> Result<RequestStatusBody, ledgergate_gateway::ClientError> {
        let body = RevocationBody {
            request_id: qid(q),
            keeper: id(keeper),
            timestamp: self.now(),
        };
        self.client.revoke(&body, &self.key(keeper)).await
    }
}

pub const WAIT: Duration = Duration::from_secs(30);
