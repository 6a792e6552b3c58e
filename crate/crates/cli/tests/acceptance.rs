//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Thresholds and budgets are the constants below.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use common::{with_ext, Consortium};
use ledgergate_core::exec::Exec;
use ledgergate_core::ledger::{make_genesis, seal_block, validate_chain, Block, BlockData};
use ledgergate_core::lifecycle::{aggregate_decision, Aggregate, Quorum, Vote, Votes};
use ledgergate_core::model::{AgreementRule, EntityId, PermissionLevel, RecordId, RequestId, TxId};
use ledgergate_core::network::sim::{simulate, sweep, Scenario, Simulation};
use ledgergate_core::snapshot::{replay, DecisionReason, Outcome, Snapshot};
use ledgergate_core::testkit::{mutate, random_chain, Fixture, TxGen, GENESIS_TIMESTAMP};
use ledgergate_gateway::keys::read_secret;
use ledgergate_gateway::types::*;
use ledgergate_gateway::client::AccessResponse;
use ledgergate_gateway::Client;
use oracle::{all_vote_vectors, HistoryOracle, OVote};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest as _, Sha256};

const TAMPER_TRIALS: usize = 1000;
const TAMPER_MAX_BLOCKS: usize = 20;
const TAMPER_DIFFICULTIES: [u32; 3] = [0, 4, 8];
const TAMPER_BUDGET: Duration = Duration::from_secs(120);

const POW_BLOCKS: u64 = 100;
const POW_DIFFICULTIES: [u32; 4] = [0, 4, 8, 12];
const POW_MEAN_FACTOR: f64 = 3.0;
const POW_CHECKED_FROM: u32 = 8;

const FUZZ_SEQUENCES: u64 = 10_000;
const FUZZ_LEN: usize = 15;

const AGGREGATE_MAX_KEEPERS: usize = 5;

const SNAPSHOT_CHAINS: usize = 100;

const RACE_SEEDS: u64 = 50;
const RACE_HONEST_SHARE: f64 = 0.90;
const PARTITION_BRANCH: u64 = 5;
const SYNC_BUDGET: Duration = Duration::from_secs(300);

const NODE_DIFFICULTY: u32 = 8;
const WAIT: Duration = Duration::from_secs(60);

/// Canonical encoding of an empty block body, written out by hand.
const EMPTY_DATA: &[u8] = br#"{"individualAuths":[],"policies":[],"records":[]}"#;

/// Every documented rejection code for a transaction.
const DOCUMENTED_CODES: [&str; 15] = [
    "RECORD_TERMINAL",
    "DUPLICATE_VOTE",
    "NOT_KEEPER",
    "POLICY_EXISTS",
    "REVOKE_WITHOUT_GRANT",
    "BAD_AUTHOR",
    "UNKNOWN_RECORD",
    "UNKNOWN_REQUEST",
    "UNKNOWN_ENTITY",
    "REQUEST_TERMINAL",
    "RECORD_EXISTS",
    "ENTITY_EXISTS",
    "ILLEGAL_TRANSITION",
    "DUPLICATE_TX",
    "MALFORMED",
];

/// Codes the fuzzer has to reach for the comparison to count.
const REJECTION_CODES: [&str; 12] = [
    "RECORD_TERMINAL",
    "DUPLICATE_VOTE",
    "NOT_KEEPER",
    "POLICY_EXISTS",
    "REVOKE_WITHOUT_GRANT",
    "BAD_AUTHOR",
    "UNKNOWN_RECORD",
    "REQUEST_TERMINAL",
    "ILLEGAL_TRANSITION",
    "DUPLICATE_TX",
    "MALFORMED",
    "UNKNOWN_ENTITY",
];

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn oracle_hash(b: &Block, data: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b.index.to_be_bytes());
    h.update(b.timestamp.to_be_bytes());
    h.update(b.previous_hash.0);
    h.update(data);
    h.update(b.nonce.to_be_bytes());
    h.finalize().into()
}

fn zero_bits(d: &[u8]) -> u32 {
    let mut n = 0;
    for byte in d {
        if *byte == 0 {
            n += 8;
        } else {
            return n + byte.leading_zeros();
        }
    }
    n
}

fn tamper_evidence() -> Check {
    let fx = Fixture::new(101);
    let params: Vec<_> = TAMPER_DIFFICULTIES.iter().map(|d| fx.params(*d)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let started = Instant::now();
    let mut fields = BTreeSet::new();
    for trial in 0..TAMPER_TRIALS {
        let p = &params[trial % params.len()];
        let blocks = rng.random_range(1..=TAMPER_MAX_BLOCKS);
        let mut chain = random_chain(&mut rng, &fx, p, blocks, 3);
        let (i, field) = mutate(&mut rng, &mut chain);
        fields.insert(field);
        let fault = validate_chain(&chain, p).err().ok_or_else(|| format!("trial {trial}: {field:?} at block {i} undetected"))?;
        ensure(fault.index as usize <= i + 1, || {
            format!("trial {trial}: {field:?} at block {i} reported at {}", fault.index)
        })?;
    }
    let took = started.elapsed();
    ensure(took < TAMPER_BUDGET, || format!("took {took:.1?}, budget {TAMPER_BUDGET:?}"))?;
    Ok(format!(
        "{TAMPER_TRIALS}/{TAMPER_TRIALS} mutations detected at or before the next block ({} field kinds, D in {TAMPER_DIFFICULTIES:?}, {took:.1?})",
        fields.len()
    ))
}

fn proof_of_work() -> Check {
    let fx = Fixture::new(102);
    let key = fx.key("m1");
    let mut means = Vec::new();
    for d in POW_DIFFICULTIES {
        let genesis = make_genesis(&fx.config(d));
        let mut attempts = 0u64;
        for t in 0..POW_BLOCKS {
            let b = seal_block(&genesis, BlockData::default(), &key, GENESIS_TIMESTAMP + 1 + t, d, Exec::default(), None)
                .map_err(|e| e.to_string())?;
            let h = oracle_hash(&b, EMPTY_DATA);
            ensure(h == b.hash.0, || format!("D={d}: stored hash differs from recomputation"))?;
            ensure(zero_bits(&h) >= d, || format!("D={d}: hash has {} leading zero bits", zero_bits(&h)))?;
            attempts += b.nonce + 1;
        }
        let mean = attempts as f64 / POW_BLOCKS as f64;
        let expected = 2f64.powi(d as i32);
        if d >= POW_CHECKED_FROM {
            ensure(mean > expected / POW_MEAN_FACTOR && mean < expected * POW_MEAN_FACTOR, || {
                format!("D={d}: mean attempts {mean:.1}, expected {expected}")
            })?;
        }
        means.push(format!("D={d}:{mean:.0}/{expected:.0}"));
    }
    Ok(format!("{} blocks recomputed; mean attempts {}", POW_BLOCKS * 4, means.join(" ")))
}

fn state_machine() -> Check {
    let fx = Fixture::new(0);
    let params = fx.params(0);
    let mut codes: BTreeMap<&str, usize> = BTreeMap::new();
    let (mut accepted_total, mut compared) = (0usize, 0usize);
    for seed in 0..FUZZ_SEQUENCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = TxGen::new(&fx);
        let mut snap: Snapshot = params.genesis_snapshot();
        let mut model = HistoryOracle::new(fx.members.iter().chain(&fx.entities).cloned().collect());
        let mut accepted = Vec::new();
        for step in 0..FUZZ_LEN {
            let block = step as u64 + 1;
            let tx = gen.arbitrary(&mut rng);
            let got = snap.apply_tx(&tx, block).map_err(|r| r.reason.code());
            let want = model.check(&tx, block);
            compared += 1;
            ensure(got == want, || format!("seed {seed} step {step}: library {got:?}, oracle {want:?}"))?;
            match got {
                Ok(()) => {
                    model.accept(block, tx.clone());
                    accepted.push((block, tx));
                }
                Err(code) => {
                    ensure(DOCUMENTED_CODES.contains(&code), || format!("seed {seed}: undocumented code {code}"))?;
                    *codes.entry(code).or_default() += 1;
                }
            }
        }
        let mut again = params.genesis_snapshot();
        for (block, tx) in &accepted {
            again
                .apply_tx(tx, *block)
                .map_err(|r| format!("seed {seed}: accepted tx rejected on replay: {}", r.reason.code()))?;
        }
        ensure(again == snap, || format!("seed {seed}: replay diverged"))?;
        accepted_total += accepted.len();
    }
    let missing: Vec<_> = REJECTION_CODES.iter().filter(|c| !codes.contains_key(*c)).collect();
    ensure(missing.is_empty(), || format!("codes never exercised: {missing:?}"))?;
    Ok(format!(
        "{FUZZ_SEQUENCES} sequences of {FUZZ_LEN}: {compared} steps agree with the history oracle, {accepted_total} accepted replay cleanly, {} distinct rejection codes seen",
        codes.len()
    ))
}

fn keeper(i: usize) -> EntityId {
    EntityId::new(format!("k{i}")).unwrap()
}

fn aggregate_consensus() -> Check {
    let mut cases = 0;
    for n in 1..=AGGREGATE_MAX_KEEPERS {
        for rule in [AgreementRule::Any, AgreementRule::Majority, AgreementRule::All] {
            let q = Quorum {
                keepers: (0..n).map(keeper).collect(),
                rule,
            };
            for vector in all_vote_vectors(n, &[OVote::None, OVote::Grant, OVote::Deny, OVote::Revoked]) {
                let votes: Votes = vector
                    .iter()
                    .enumerate()
                    .filter_map(|(i, v)| {
                        let v = match v {
                            OVote::None => return None,
                            OVote::Grant => Vote::Grant,
                            OVote::Deny => Vote::Deny,
                            OVote::Revoked => Vote::RevokedGrant,
                        };
                        Some((keeper(i), v))
                    })
                    .collect();
                let got = match aggregate_decision(&q, &votes) {
                    Aggregate::Pending => "PENDING",
                    Aggregate::Granted => "GRANTED",
                    Aggregate::Denied => "DENIED",
                };
                let want = oracle::aggregate(rule, &vector);
                ensure(got == want, || format!("n={n} {rule:?} {vector:?}: {got} vs {want}"))?;
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} vote vectors (n<=5, 3 rules) match the oracle"))
}

fn snapshot_replay() -> Check {
    let fx = Fixture::new(105);
    let params = fx.params(0);
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut blocks_total = 0;
    for c in 0..SNAPSHOT_CHAINS {
        let blocks = rng.random_range(1..=12);
        let chain = random_chain(&mut rng, &fx, &params, blocks, 5);
        blocks_total += blocks;
        let tip = validate_chain(&chain, &params).map_err(|e| format!("chain {c}: {e}"))?;
        let mut folded = params.genesis_snapshot();
        for k in 1..chain.len() as u64 {
            folded.apply_block(&chain[k as usize]).map_err(|e| format!("chain {c}: {e}"))?;
            let scratch = replay(&chain, params.config(), k).map_err(|e| format!("chain {c}: {e}"))?;
            ensure(scratch == folded, || format!("chain {c}: incremental state differs at block {k}"))?;
        }
        let a = replay(&chain, params.config(), u64::MAX).map_err(|e| e.to_string())?;
        let b = replay(&chain, params.config(), u64::MAX).map_err(|e| e.to_string())?;
        ensure(a == b && a == tip, || format!("chain {c}: replay not deterministic"))?;
    }
    Ok(format!("{SNAPSHOT_CHAINS} chains ({blocks_total} blocks): replay deterministic and equal to incremental folding"))
}

fn sync_convergence() -> Check {
    let started = Instant::now();

    let conv = simulate(&scenario("convergence.json")).map_err(|e| e.to_string())?;
    ensure(conv.converged && conv.submit_failures.is_empty(), || {
        format!("convergence: converged={} failures={:?}", conv.converged, conv.submit_failures)
    })?;

    let (heal, sim) = Simulation::new(scenario("partition_heal.json")).map_err(|e| e.to_string())?.run();
    let heights: Vec<u64> = sim.honest_nodes().map(|n| n.height()).collect();
    let tips: BTreeSet<_> = sim.honest_nodes().map(|n| n.tip_block().hash).collect();
    ensure(heal.converged && tips.len() == 1, || format!("partition: {} tips", tips.len()))?;
    ensure(heights.iter().all(|h| *h == PARTITION_BRANCH + 1), || {
        format!("partition: heights {heights:?}, expected the {PARTITION_BRANCH}-block branch")
    })?;

    let nm = simulate(&scenario("non_member_adversary.json")).map_err(|e| e.to_string())?;
    ensure(nm.adversary_blocks_mined > 0 && nm.adversary_blocks_adopted == 0, || {
        format!("non-member: mined {} adopted {}", nm.adversary_blocks_mined, nm.adversary_blocks_adopted)
    })?;

    let seeds: Vec<u64> = (0..RACE_SEEDS).collect();
    let race = sweep(&scenario("mining_race.json"), &seeds, Exec::default()).map_err(|e| e.to_string())?;
    let honest = race.iter().filter(|r| r.honest_prevailed()).count();
    let share = honest as f64 / RACE_SEEDS as f64;
    ensure(share >= RACE_HONEST_SHARE, || format!("mining race: honest chain prevailed in {honest}/{RACE_SEEDS}"))?;

    let took = started.elapsed();
    ensure(took < SYNC_BUDGET, || format!("took {took:.1?}, budget {SYNC_BUDGET:?}"))?;
    Ok(format!(
        "converged; partition adopted {PARTITION_BRANCH}-block branch (reorg depth {}); non-member adopted 0/{}; race honest {honest}/{RACE_SEEDS}; {took:.1?}",
        heal.max_reorg_depth, nm.adversary_blocks_mined
    ))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).unwrap().as_secs()
}

struct Http {
    client: Client,
    keys: BTreeMap<String, (EntityId, ledgergate_core::crypto::KeyPair)>,
}

impl Http {
    fn new(c: &Consortium, url: &str) -> Self {
        let mut keys = BTreeMap::new();
        for (i, (id, stem)) in c.keepers.iter().enumerate() {
            let key = read_secret(std::path::Path::new(&with_ext(stem, "key"))).unwrap();
            keys.insert(format!("k{}", i + 1), (EntityId::new(id.clone()).unwrap(), key));
        }
        let party = read_secret(std::path::Path::new(&with_ext(&c.party.1, "key"))).unwrap();
        keys.insert("p1".into(), (EntityId::new(c.party.0.clone()).unwrap(), party));
        Http {
            client: Client::new(url),
            keys,
        }
    }

    fn id(&self, who: &str) -> EntityId {
        self.keys[who].0.clone()
    }

    async fn create(&self, record: &str) -> Result<(), String> {
        let body = RecordBody {
            tx_id: TxId::new(format!("c-{record}")).unwrap(),
            author: self.id("k1"),
            record_id: RecordId::new(record).unwrap(),
            keepers: ["k1", "k2", "k3"].iter().map(|k| self.id(k)).collect(),
            agreement: AgreementRule::Majority,
            location: format!("ehr://hospital/{record}"),
            timestamp: now(),
        };
        self.client.create_record(&body, &self.keys["k1"].1).await.map_err(|e| e.to_string())?;
        self.mined().await
    }

    fn access(&self, q: &str, record: &str) -> AccessRequestBody {
        AccessRequestBody {
            request_id: RequestId::new(q).unwrap(),
            party: self.id("p1"),
            record: RecordId::new(record).unwrap(),
            level: PermissionLevel::Read,
            expiry: None,
            timestamp: now(),
        }
    }

    async fn ask(&self, body: &AccessRequestBody) -> Result<AccessResponse, String> {
        self.client.access_request(body, &self.keys["p1"].1).await.map_err(|e| e.to_string())
    }

    async fn decided(&self, body: &AccessRequestBody) -> Result<DecisionBody, String> {
        match self.ask(body).await? {
            AccessResponse::Decided(d) => Ok(d),
            AccessResponse::Pending(p) => Err(format!("still escalated: {p:?}")),
        }
    }

    async fn grant(&self, q: &str, who: &str) -> Result<RequestStatusBody, String> {
        let body = AuthorizationBody {
            request_id: RequestId::new(q).unwrap(),
            keeper: self.id(who),
            verdict: Verdict::Grant,
            timestamp: now(),
        };
        self.client.authorize(&body, &self.keys[who].1).await.map_err(|e| e.to_string())
    }

    async fn revoke(&self, q: &str, who: &str) -> Result<RequestStatusBody, String> {
        let body = RevocationBody {
            request_id: RequestId::new(q).unwrap(),
            keeper: self.id(who),
            timestamp: now(),
        };
        self.client.revoke(&body, &self.keys[who].1).await.map_err(|e| e.to_string())
    }

    async fn mined(&self) -> Result<(), String> {
        self.client.wait_mined(WAIT).await.map(|_| ()).map_err(|e| e.to_string())
    }
}

fn expect_decision(d: &DecisionBody, outcome: Outcome, step: &str) -> Result<(), String> {
    ensure(d.outcome == outcome, || format!("{step}: got {d:?}"))
}

async fn end_to_end_flow(c: &Consortium, url: &str) -> Check {
    let h = Http::new(c, url);
    h.create("r1").await?;

    let q = h.access("q1", "r1");
    match h.ask(&q).await? {
        AccessResponse::Pending(p) => ensure(p.required_grants == 2 && p.keepers.len() == 3, || format!("escalation: {p:?}"))?,
        AccessResponse::Decided(d) => return Err(format!("unknown request decided immediately: {d:?}")),
    }
    h.mined().await?;
    h.grant("q1", "k1").await?;
    h.grant("q1", "k2").await?;
    h.mined().await?;
    let d = h.decided(&q).await?;
    expect_decision(&d, Outcome::Grant, "after two grants")?;
    ensure(d.location.as_deref() == Some("ehr://hospital/r1"), || format!("grant without location: {d:?}"))?;

    h.grant("q1", "k3").await?;
    h.mined().await?;
    let s = h.revoke("q1", "k1").await?;
    h.mined().await?;
    ensure(s.live_grants == 2 && s.required_grants == 2, || format!("after first revocation: {s:?}"))?;
    expect_decision(&h.decided(&q).await?, Outcome::Grant, "after first revocation")?;

    h.revoke("q1", "k2").await?;
    h.mined().await?;
    let d = h.decided(&q).await?;
    expect_decision(&d, Outcome::Deny, "after second revocation")?;
    ensure(d.reason == DecisionReason::PolicyRevoked, || format!("deny reason: {d:?}"))?;

    // The same steps without the third grant: one revocation already drops
    // below the threshold.
    h.create("r2").await?;
    let q2 = h.access("q2", "r2");
    h.ask(&q2).await?;
    h.mined().await?;
    h.grant("q2", "k1").await?;
    h.grant("q2", "k2").await?;
    h.mined().await?;
    let s = h.revoke("q2", "k1").await?;
    h.mined().await?;
    let literal = h.decided(&q2).await?;
    ensure(s.status == Status::Revoked && literal.outcome == Outcome::Deny, || {
        format!("two grants then one revocation: {s:?} {literal:?}")
    })?;

    let v = h.client.validate().await.map_err(|e| e.to_string())?;
    ensure(v.valid, || format!("chain invalid: {v:?}"))?;
    Ok(format!(
        "202 escalation -> 2 grants -> 200 GRANT -> late grant + 1 revocation -> GRANT (2>=2) -> 2nd revocation -> DENY; without the late grant one revocation gives {:?} ({}<2); height {}",
        s.status, s.live_grants, v.height
    ))
}

async fn durability(c: &Consortium) -> Check {
    let (mut child, url) = c.spawn("dur", &c.member);
    let h = Http::new(c, &url);
    let mut created = 0;
    for i in 0..4 {
        h.create(&format!("d{i}")).await?;
        created += 1;
    }
    let before = h.client.status().await.map_err(|e| e.to_string())?.height;
    // Queue more work and kill without waiting for it.
    for i in 4..8 {
        let body = RecordBody {
            tx_id: TxId::new(format!("c-d{i}")).unwrap(),
            author: h.id("k1"),
            record_id: RecordId::new(format!("d{i}")).unwrap(),
            keepers: vec![h.id("k1")],
            agreement: AgreementRule::Any,
            location: "ehr://x".into(),
            timestamp: now(),
        };
        h.client.create_record(&body, &h.keys["k1"].1).await.map_err(|e| e.to_string())?;
    }
    child.kill().map_err(|e| e.to_string())?;
    child.wait().map_err(|e| e.to_string())?;

    let (mut child, url) = c.spawn("dur", &c.member);
    let client = Client::new(&url);
    let v = client.validate().await.map_err(|e| e.to_string())?;
    let mut present = 0;
    for i in 0..created {
        if client.record(&RecordId::new(format!("d{i}")).unwrap()).await.is_ok() {
            present += 1;
        }
    }
    child.kill().map_err(|e| e.to_string())?;
    child.wait().map_err(|e| e.to_string())?;
    ensure(v.valid && v.height >= before, || format!("after kill -9: {v:?}, height before {before}"))?;
    ensure(present == created, || format!("{present}/{created} mined records survived"))?;

    let store = c.data_dir("dur").join("chain.bin");
    let len = std::fs::metadata(&store).map_err(|e| e.to_string())?.len();
    let f = std::fs::OpenOptions::new().write(true).open(&store).map_err(|e| e.to_string())?;
    f.set_len(len - 7).map_err(|e| e.to_string())?;
    drop(f);
    let out = common::bin()
        .args(["run", "--genesis", c.genesis.to_str().unwrap(), "--key", &with_ext(&c.member, "key")])
        .args(["--data-dir", c.data_dir("dur").to_str().unwrap(), "--listen", "127.0.0.1:0"])
        .env("LEDGERGATE_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    let err = common::stderr(&out);
    ensure(!out.status.success() && err.contains("CORRUPT_STORE"), || format!("truncated store accepted: {err}"))?;
    Ok(format!(
        "kill -9 at height {before} -> restart validates at height {}, {present}/{created} records kept; truncated store refused with CORRUPT_STORE",
        v.height
    ))
}

fn run_nodes() -> (Check, Check) {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let c = Consortium::new(NODE_DIFFICULTY);
    let e2e = rt.block_on(async {
        let (mut child, url) = c.spawn("e2e", &c.member);
        let r = end_to_end_flow(&c, &url).await;
        let _ = child.kill();
        let _ = child.wait();
        r
    });
    let dur = rt.block_on(durability(&c));
    (e2e, dur)
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Check)> = vec![
        ("tamper-evidence", guarded(tamper_evidence)),
        ("proof-of-work", guarded(proof_of_work)),
        ("state-machine", guarded(state_machine)),
        ("aggregate-consensus", guarded(aggregate_consensus)),
        ("snapshot-replay", guarded(snapshot_replay)),
        ("sync-convergence", guarded(sync_convergence)),
    ];
    let (e2e, dur) = match catch_unwind(AssertUnwindSafe(run_nodes)) {
        Ok(pair) => pair,
        Err(_) => (Err("node harness panicked".into()), Err("node harness panicked".into())),
    };
    results.push(("end-to-end-flow", e2e));
    results.push(("durability", dur));

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("PASS {name:<20} {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name:<20} {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
