mod common;

use std::fs::{self, OpenOptions};
use std::time::Duration;

use common::*;
use ledgergate_core::model::{AgreementRule, PermissionLevel};
use ledgergate_core::store::{read_blocks, BlockStore};
use ledgergate_core::testkit::{Fixture, GENESIS_TIMESTAMP};
use ledgergate_gateway::clock::ManualClock;
use ledgergate_gateway::{start, Client};

#[tokio::test]
async fn restart_preserves_chain_and_truncation_is_refused() {
    let gw = Gw::start().await;
    gw.create("r1", AgreementRule::Any, &["k1"]).await;
    gw.create("r2", AgreementRule::All, &["k2", "k3"]).await;
    gw.mine_all().await;
    let before = gw.client.chain().await.unwrap();
    assert!(before.len() >= 2);
    let Gw { run, fx, clock, dir, .. } = gw;
    run.shutdown().await;

    let data = dir.path().join("n1");
    let run = start(setup(&fx, Some("m1"), data.clone(), &clock, false)).await.unwrap();
    let client = Client::new(run.base_url());
    assert_eq!(client.chain().await.unwrap(), before);
    assert!(client.record(&rid("r2")).await.is_ok());
    run.shutdown().await;

    let store = data.join("chain.bin");
    let len = fs::metadata(&store).unwrap().len();
    OpenOptions::new().write(true).open(&store).unwrap().set_len(len - 3).unwrap();
    let err = start(setup(&fx, Some("m1"), data, &clock, false)).await.err().unwrap();
    assert_eq!(err.code(), "CORRUPT_STORE", "{err}");
}

#[tokio::test]
async fn validate_reports_first_bad_index_of_tampered_store() {
    let gw = Gw::start().await;
    for r in ["r1", "r2", "r3"] {
        gw.create(r, AgreementRule::Any, &["k1"]).await;
        gw.mine_all().await;
    }
    assert!(gw.client.validate().await.unwrap().valid);

    // Rewrite the file with block 2's nonce bumped, framing intact.
    let path = gw.dir.path().join("n1").join("chain.bin");
    let mut blocks = read_blocks(&path).unwrap();
    blocks[2].nonce += 1;
    let params = gw.fx.params(D);
    let scratch = gw.dir.path().join("scratch.bin");
    let (mut s, _, _) = BlockStore::open(&scratch, &params).unwrap();
    s.sync_to(&blocks).unwrap();
    drop(s);
    fs::copy(&scratch, &path).unwrap();

    let v = gw.client.validate().await.unwrap();
    assert!(!v.valid);
    assert_eq!(v.first_bad_index, Some(2));
    let Gw { run, fx, clock, dir, .. } = gw;
    run.shutdown().await;
    let err = start(setup(&fx, Some("m1"), dir.path().join("n1"), &clock, false)).await.err().unwrap();
    assert_eq!(err.code(), "CORRUPT_STORE");
}

#[tokio::test]
async fn peered_nodes_converge() {
    let fx = Fixture::new(40);
    let dir = tempfile::tempdir().unwrap();
    let clock = ManualClock::new(GENESIS_TIMESTAMP + 10);
    let a = start(setup(&fx, Some("m1"), dir.path().join("a"), &clock, true)).await.unwrap();
    let mut sb = setup(&fx, Some("m2"), dir.path().join("b"), &clock, true);
    sb.peers = vec![a.p2p_addr.unwrap().to_string()];
    let b = start(sb).await.unwrap();
    let (ca, cb) = (Client::new(a.base_url()), Client::new(b.base_url()));
    ca.wait_for("peering", WAIT, |s| !s.peers.is_empty()).await.unwrap();

    let gw_key = |n: &str| fx.key(n);
    let body = ledgergate_gateway::types::RecordBody {
        tx_id: ledgergate_core::model::TxId::new("c-r1").unwrap(),
        author: id("k1"),
        record_id: rid("r1"),
        keepers: vec![id("k1"), id("k2")],
        agreement: AgreementRule::Any,
        location: "ehr://x".into(),
        timestamp: clock.now_secs(),
    };
    cb.create_record(&body, &gw_key("k1")).await.unwrap();
    // Submitted at b, gossiped to a; both mine and settle on one chain.
    ca.wait_for("record mined at a", WAIT, |s| s.height >= 1 && s.mempool == 0).await.unwrap();
    let tip_b = cb.wait_mined(WAIT).await.unwrap();
    let tip_a = ca.wait_for("same tip", WAIT, |s| s.tip == tip_b.tip || s.height > tip_b.height).await.unwrap();
    let final_b = cb.wait_for("same tip", WAIT, |s| s.tip == tip_a.tip).await.unwrap();
    assert_eq!(final_b.tip, ca.status().await.unwrap().tip);
    assert!(ca.record(&rid("r1")).await.is_ok());
    // Block identity is the hash; the miner signature is outside the
    // preimage, so two miners sealing the same contents agree on it.
    let hashes = |c: Vec<ledgergate_core::ledger::Block>| c.iter().map(|b| b.hash).collect::<Vec<_>>();
    assert_eq!(hashes(ca.chain().await.unwrap()), hashes(cb.chain().await.unwrap()));
    a.shutdown().await;
    b.shutdown().await;
}

#[tokio::test]
async fn read_only_node_decides_but_cannot_escalate() {
    let fx = Fixture::new(40);
    let dir = tempfile::tempdir().unwrap();
    let clock = ManualClock::new(GENESIS_TIMESTAMP + 10);
    let run = start(setup(&fx, None, dir.path().join("ro"), &clock, true)).await.unwrap();
    let client = Client::new(run.base_url());
    let s = client.status().await.unwrap();
    assert!(!s.miner);
    let body = ledgergate_gateway::types::RecordBody {
        tx_id: ledgergate_core::model::TxId::new("c-r1").unwrap(),
        author: id("k1"),
        record_id: rid("r1"),
        keepers: vec![id("k1")],
        agreement: AgreementRule::Any,
        location: "ehr://x".into(),
        timestamp: clock.now_secs(),
    };
    client.create_record(&body, &fx.key("k1")).await.unwrap();
    let req = ledgergate_gateway::types::AccessRequestBody {
        request_id: qid("q1"),
        party: id("p1"),
        record: rid("r1"),
        level: PermissionLevel::Read,
        expiry: None,
        timestamp: clock.now_secs(),
    };
    let err = client.access_request(&req, &fx.key("p1")).await.unwrap_err();
    assert_eq!((err.status(), err.code()), (Some(503), "NOT_MEMBER"));
    tokio::time::sleep(Duration::from_millis(300)).await;
    assert_eq!(client.status().await.unwrap().height, 0);
    run.shutdown().await;
}
