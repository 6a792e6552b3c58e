//! Deterministic network simulator: [`Node`]s exchanging [`WireMessage`]s
//! over links with latency, in virtual time, driven by a seeded RNG and a
//! scripted event list.
//!
//! Mining is a race: each miner finds its next block after an exponential
//! delay with rate proportional to its hash rate, and the block itself is
//! produced with real proof of work at the scenario difficulty.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Node, NodeOptions, WireMessage};
use crate::crypto::{Digest, KeyPair};
use crate::exec::Exec;
use crate::ledger::{seal_block, Block, BlockData, ChainParams, GenesisConfig};
use crate::model::{AgreementRule, Entity, EntityId, IdError, PermissionLevel, RecordId, RequestId, Role, StateTag, TxId};
use crate::tx::Signer;

fn default_difficulty() -> u32 {
    8
}
fn default_genesis_timestamp() -> u64 {
    1_700_000_000
}
fn default_latency() -> u64 {
    20
}
fn default_block_time() -> f64 {
    1000.0
}
fn default_true() -> bool {
    true
}
fn default_rate() -> f64 {
    1.0
}
fn default_location() -> String {
    "ehr://store/default".into()
}
fn default_rule() -> AgreementRule {
    AgreementRule::Majority
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_difficulty")]
    pub difficulty: u32,
    #[serde(default = "default_genesis_timestamp")]
    pub genesis_timestamp: u64,
    pub nodes: Vec<NodeSpec>,
    /// Non-member entities present at genesis.
    #[serde(default)]
    pub entities: Vec<EntitySpec>,
    #[serde(default)]
    pub links: Links,
    #[serde(default = "default_latency")]
    pub latency_ms: u64,
    #[serde(default)]
    pub jitter_ms: u64,
    /// Mean time for a unit hash rate to find a block.
    #[serde(default = "default_block_time")]
    pub block_time_ms: f64,
    /// Miners start mining on their own whenever they have pending work.
    #[serde(default = "default_true")]
    pub auto_mine: bool,
    /// Miners keep mining when the mempool is empty.
    #[serde(default)]
    pub mine_empty: bool,
    pub horizon_ms: u64,
    #[serde(default)]
    pub trace_messages: bool,
    #[serde(default)]
    pub events: Vec<ScriptEvent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    #[serde(default = "default_rate")]
    pub hash_rate: f64,
    /// Whether the node's key is in the genesis member set.
    #[serde(default = "default_true")]
    pub member: bool,
    #[serde(default)]
    pub adversary: Option<AdversarySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AdversaryKind {
    /// Signs with a key outside the member set and announces every block.
    NonMember,
    /// Holds a member key and mines a private branch, releasing it once it
    /// is strictly longer than the public chain.
    StolenKey,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AdversarySpec {
    pub kind: AdversaryKind,
    #[serde(default)]
    pub attack_at_ms: u64,
    /// Blocks dropped from the public tip when the private branch starts.
    #[serde(default)]
    pub rewind: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EntitySpec {
    pub name: String,
    pub role: Role,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Links {
    #[default]
    Complete,
    Ring,
    Line,
    Edges(Vec<(String, String)>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScriptEvent {
    pub at: u64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "do", rename_all = "camelCase")]
pub enum Action {
    Submit { node: String, tx: TxSpec },
    Mine { node: String },
    Partition { groups: Vec<Vec<String>> },
    Heal,
    Connect { a: String, b: String },
    Disconnect { a: String, b: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Grant,
    Deny,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum TxSpec {
    CreateRecord {
        author: String,
        record: String,
        keepers: Vec<String>,
        #[serde(default = "default_rule")]
        rule: AgreementRule,
        #[serde(default = "default_location")]
        location: String,
        #[serde(default)]
        tx_id: Option<String>,
    },
    UpdateRecord {
        author: String,
        record: String,
        keepers: Vec<String>,
        #[serde(default = "default_rule")]
        rule: AgreementRule,
        #[serde(default = "default_location")]
        location: String,
        #[serde(default)]
        tx_id: Option<String>,
    },
    RemoveRecord {
        author: String,
        record: String,
        #[serde(default)]
        tx_id: Option<String>,
    },
    Register {
        author: String,
        name: String,
        role: Role,
        #[serde(default)]
        tx_id: Option<String>,
    },
    Request {
        party: String,
        request: String,
        record: String,
        #[serde(default)]
        level: Option<PermissionLevel>,
        #[serde(default)]
        expiry: Option<u64>,
    },
    Require {
        node: String,
        request: String,
    },
    Vote {
        keeper: String,
        request: String,
        verdict: Verdict,
    },
    Revoke {
        keeper: String,
        request: String,
    },
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("SCENARIO_INVALID: {0}")]
    Invalid(String),
    #[error("SCENARIO_INVALID: {0}")]
    Id(#[from] IdError),
    #[error("SCENARIO_INVALID: {0}")]
    Json(#[from] serde_json::Error),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Scenario {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceLine {
    pub at_ms: u64,
    pub node: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeReport {
    pub name: String,
    pub adversary: Option<AdversaryKind>,
    pub height: u64,
    pub tip: Digest,
    pub mempool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimReport {
    pub scenario: String,
    pub seed: u64,
    pub end_ms: u64,
    pub nodes: Vec<NodeReport>,
    /// All honest nodes hold the same chain.
    pub converged: bool,
    pub adversary_blocks_mined: usize,
    /// Most adversary blocks found in any honest node's final chain.
    pub adversary_blocks_adopted: usize,
    pub reorgs: usize,
    pub max_reorg_depth: u64,
    pub rejected_blocks: usize,
    pub submit_failures: Vec<TraceLine>,
    pub trace: Vec<TraceLine>,
}

impl SimReport {
    /// No adversary block survives in any honest chain.
    pub fn honest_prevailed(&self) -> bool {
        self.adversary_blocks_adopted == 0
    }
}

#[derive(Debug)]
enum Ev {
    Script(usize),
    Deliver {
        from: usize,
        to: usize,
        msg: WireMessage,
    },
    MineFound {
        node: usize,
        epoch: u64,
    },
    Attack(usize),
}

struct Adversary {
    spec: AdversarySpec,
    /// Private branch once the attack has started.
    private: Option<Vec<Block>>,
    released: bool,
}

struct SimNode {
    name: String,
    rate: f64,
    node: Node,
    adversary: Option<Adversary>,
    epoch: u64,
    mining_on: Option<Digest>,
}

pub struct Simulation {
    scenario: Scenario,
    params: Arc<ChainParams>,
    keys: BTreeMap<String, KeyPair>,
    nodes: Vec<SimNode>,
    index: BTreeMap<String, usize>,
    links: BTreeSet<(usize, usize)>,
    partition: Option<BTreeMap<usize, usize>>,
    queue: BinaryHeap<Reverse<(u64, u64, usize)>>,
    pending: BTreeMap<usize, Ev>,
    seq: u64,
    now: u64,
    rng: ChaCha8Rng,
    produced: BTreeSet<Digest>,
    reorgs: usize,
    max_reorg_depth: u64,
    rejected_blocks: usize,
    submit_failures: Vec<TraceLine>,
    trace: Vec<TraceLine>,
    exec: Exec,
}

fn id(name: &str) -> Result<EntityId, ScenarioError> {
    Ok(EntityId::new(name)?)
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        Self::with_exec(scenario, Exec::Sequential)
    }

    /// `exec` is used for proof-of-work and chain validation inside nodes.
    pub fn with_exec(scenario: Scenario, exec: Exec) -> Result<Self, ScenarioError> {
        let seed = scenario.seed;
        let mut keys = BTreeMap::new();
        let mut members = Vec::new();
        let mut index = BTreeMap::new();
        for (i, n) in scenario.nodes.iter().enumerate() {
            if index.insert(n.name.clone(), i).is_some() {
                return invalid(format!("duplicate node {}", n.name));
            }
            if !(n.hash_rate >= 0.0 && n.hash_rate.is_finite()) {
                return invalid(format!("node {}: hash rate must be finite and non-negative", n.name));
            }
            let key = KeyPair::from_seed_label(seed, &n.name);
            if n.member {
                members.push(Entity {
                    id: id(&n.name)?,
                    role: Role::ConsortiumNode,
                    public_key: key.public(),
                });
            }
            keys.insert(n.name.clone(), key);
        }
        let mut entities = Vec::new();
        for e in &scenario.entities {
            if keys.contains_key(&e.name) {
                return invalid(format!("duplicate entity {}", e.name));
            }
            let key = KeyPair::from_seed_label(seed, &e.name);
            entities.push(Entity {
                id: id(&e.name)?,
                role: e.role,
                public_key: key.public(),
            });
            keys.insert(e.name.clone(), key);
        }
        let config = GenesisConfig {
            timestamp: scenario.genesis_timestamp,
            difficulty: scenario.difficulty,
            members,
            entities,
        };
        let params = Arc::new(ChainParams::new(config).map_err(|e| ScenarioError::Invalid(e.to_string()))?);
        let opts = NodeOptions {
            exec,
            ..NodeOptions::default()
        };
        let nodes = scenario
            .nodes
            .iter()
            .map(|n| SimNode {
                name: n.name.clone(),
                rate: n.hash_rate,
                node: Node::new(n.name.clone(), params.clone(), Some(keys[&n.name].clone()), opts),
                adversary: n.adversary.clone().map(|spec| Adversary {
                    spec,
                    private: None,
                    released: false,
                }),
                epoch: 0,
                mining_on: None,
            })
            .collect::<Vec<_>>();

        let count = nodes.len();
        let mut links = BTreeSet::new();
        let mut add = |a: usize, b: usize| {
            if a != b {
                links.insert((a.min(b), a.max(b)));
            }
        };
        match &scenario.links {
            Links::Complete => (0..count).for_each(|a| (a + 1..count).for_each(|b| add(a, b))),
            Links::Ring => (0..count).for_each(|a| add(a, (a + 1) % count)),
            Links::Line => (1..count).for_each(|a| add(a - 1, a)),
            Links::Edges(edges) => {
                for (a, b) in edges {
                    let (Some(&a), Some(&b)) = (index.get(a), index.get(b)) else {
                        return invalid(format!("link {a}-{b} names an unknown node"));
                    };
                    add(a, b);
                }
            }
        }

        let sim = Simulation {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scenario,
            params,
            keys,
            nodes,
            index,
            links,
            partition: None,
            queue: BinaryHeap::new(),
            pending: BTreeMap::new(),
            seq: 0,
            now: 0,
            produced: BTreeSet::new(),
            reorgs: 0,
            max_reorg_depth: 0,
            rejected_blocks: 0,
            submit_failures: Vec::new(),
            trace: Vec::new(),
            exec,
        };
        sim.check_script()?;
        Ok(sim)
    }

    fn check_script(&self) -> Result<(), ScenarioError> {
        let known = |n: &str| {
            if self.keys.contains_key(n) {
                Ok(())
            } else {
                invalid(format!("unknown entity or node {n}"))
            }
        };
        let node = |n: &str| {
            if self.index.contains_key(n) {
                Ok(())
            } else {
                invalid(format!("unknown node {n}"))
            }
        };
        for ev in &self.scenario.events {
            match &ev.action {
                Action::Submit { node: n, tx } => {
                    node(n)?;
                    match tx {
                        TxSpec::CreateRecord { author, keepers, .. } | TxSpec::UpdateRecord { author, keepers, .. } => {
                            known(author)?;
                            keepers.iter().try_for_each(|k| id(k).map(drop))?;
                        }
                        TxSpec::RemoveRecord { author, .. } | TxSpec::Register { author, .. } => known(author)?,
                        TxSpec::Request { party, .. } => known(party)?,
                        TxSpec::Require { node: n, .. } => known(n)?,
                        TxSpec::Vote { keeper, .. } | TxSpec::Revoke { keeper, .. } => known(keeper)?,
                    }
                }
                Action::Mine { node: n } => node(n)?,
                Action::Partition { groups } => groups.iter().flatten().try_for_each(|n| node(n))?,
                Action::Heal => {}
                Action::Connect { a, b } | Action::Disconnect { a, b } => {
                    node(a)?;
                    node(b)?;
                }
            }
        }
        Ok(())
    }

    pub fn params(&self) -> &Arc<ChainParams> {
        &self.params
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.index.get(name).map(|&i| &self.nodes[i].node)
    }

    /// Nodes not scripted as adversaries.
    pub fn honest_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.adversary.is_none()).map(|n| &n.node)
    }

    /// Key the simulator derived for a node or entity.
    pub fn key(&self, name: &str) -> Option<&KeyPair> {
        self.keys.get(name)
    }

    pub fn now_ms(&self) -> u64 {
        self.now
    }

    fn schedule(&mut self, at: u64, ev: Ev) {
        let slot = self.seq as usize;
        self.seq += 1;
        self.pending.insert(slot, ev);
        self.queue.push(Reverse((at, self.seq - 1, slot)));
    }

    fn log(&mut self, node: usize, text: impl Into<String>) {
        let name = if node == usize::MAX {
            "-".to_string()
        } else {
            self.nodes[node].name.clone()
        };
        self.trace.push(TraceLine {
            at_ms: self.now,
            node: name,
            text: text.into(),
        });
    }

    fn timestamp(&self) -> u64 {
        self.scenario.genesis_timestamp + self.now / 1000
    }

    fn linked(&self, a: usize, b: usize) -> bool {
        self.links.contains(&(a.min(b), a.max(b)))
    }

    fn reachable(&self, a: usize, b: usize) -> bool {
        self.linked(a, b)
            && match &self.partition {
                None => true,
                Some(groups) => groups.get(&a) == groups.get(&b),
            }
    }

    /// Run to the horizon, or until nothing is left to happen.
    pub fn run(mut self) -> (SimReport, Self) {
        for i in 0..self.scenario.events.len() {
            let at = self.scenario.events[i].at;
            self.schedule(at, Ev::Script(i));
        }
        let links: Vec<_> = self.links.iter().copied().collect();
        for (a, b) in links {
            self.connect_pair(a, b);
        }
        for i in 0..self.nodes.len() {
            if let Some(adv) = &self.nodes[i].adversary {
                let at = adv.spec.attack_at_ms;
                self.schedule(at, Ev::Attack(i));
            }
            self.reschedule(i);
        }
        while let Some(Reverse((at, _, slot))) = self.queue.pop() {
            if at > self.scenario.horizon_ms {
                break;
            }
            self.now = at;
            let ev = self.pending.remove(&slot).expect("scheduled event present");
            self.dispatch(ev);
        }
        self.now = self.now.min(self.scenario.horizon_ms);
        (self.report(), self)
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::Script(i) => {
                let action = self.scenario.events[i].action.clone();
                self.script(i, action);
            }
            Ev::Deliver { from, to, msg } => {
                if !self.reachable(from, to) {
                    if self.scenario.trace_messages {
                        self.log(to, format!("dropped {} from {}", msg.label(), self.nodes[from].name));
                    }
                    return;
                }
                if self.scenario.trace_messages {
                    self.log(to, format!("received {} from {}", msg.label(), self.nodes[from].name));
                }
                self.deliver(from, to, msg);
            }
            Ev::Attack(i) => {
                self.start_attack(i);
                self.reschedule(i);
            }
            Ev::MineFound { node, epoch } => {
                if self.nodes[node].epoch != epoch {
                    return;
                }
                self.nodes[node].mining_on = None;
                self.found_block(node);
                self.reschedule(node);
            }
        }
    }

    fn deliver(&mut self, from: usize, to: usize, msg: WireMessage) {
        let from_name = self.nodes[from].name.clone();
        if let Some(adv) = &self.nodes[to].adversary {
            if adv.private.is_some() {
                // The attacker still follows the public chain to know how
                // far ahead it must get, but only ever serves its branch.
                let released = adv.released;
                let private = adv.private.clone().expect("checked");
                match msg {
                    WireMessage::GetChain if released => {
                        self.send(to, from, WireMessage::Chain(private));
                    }
                    WireMessage::GetLatest if released => {
                        let tip = private.last().expect("non-empty").clone();
                        self.send(to, from, WireMessage::Latest(tip));
                    }
                    WireMessage::GetChain | WireMessage::GetLatest => {}
                    other => {
                        let fx = self.nodes[to].node.handle(&from_name, other);
                        for (peer, msg) in fx.sends {
                            if matches!(msg, WireMessage::GetChain | WireMessage::GetLatest) {
                                let p = self.index[&peer];
                                self.send(to, p, msg);
                            }
                        }
                    }
                }
                return;
            }
        }
        let fx = self.nodes[to].node.handle(&from_name, msg);
        self.apply_effects(to, fx);
        self.reschedule(to);
    }

    fn send(&mut self, from: usize, to: usize, msg: WireMessage) {
        if !self.reachable(from, to) {
            return;
        }
        let jitter = if self.scenario.jitter_ms > 0 {
            self.rng.random_range(0..=self.scenario.jitter_ms)
        } else {
            0
        };
        let at = self.now + self.scenario.latency_ms + jitter;
        self.schedule(at, Ev::Deliver { from, to, msg });
    }

    fn apply_effects(&mut self, node: usize, fx: super::Effects) {
        for ev in fx.events {
            match &ev {
                super::NodeEvent::ChainAdopted {
                    fork_point, old_height, ..
                } => {
                    if fork_point < old_height {
                        self.reorgs += 1;
                        self.max_reorg_depth = self.max_reorg_depth.max(old_height - fork_point);
                    }
                }
                super::NodeEvent::BlockRejected { .. } | super::NodeEvent::ChainRejected { .. } => {
                    self.rejected_blocks += 1;
                }
                _ => {}
            }
            self.log(node, ev.to_string());
        }
        for (peer, msg) in fx.sends {
            let to = self.index[&peer];
            self.send(node, to, msg);
        }
    }

    fn connect_pair(&mut self, a: usize, b: usize) {
        let (na, nb) = (self.nodes[a].name.clone(), self.nodes[b].name.clone());
        let fa = self.nodes[a].node.connect(&nb);
        let fb = self.nodes[b].node.connect(&na);
        self.apply_effects(a, fa);
        self.apply_effects(b, fb);
    }

    fn wants_to_mine(&self, i: usize) -> bool {
        let n = &self.nodes[i];
        if n.rate <= 0.0 {
            return false;
        }
        match &n.adversary {
            Some(adv) => adv.private.is_some(),
            None => {
                self.scenario.auto_mine
                    && n.node.is_miner()
                    && (self.scenario.mine_empty || n.node.wants_to_mine())
            }
        }
    }

    fn mining_base(&self, i: usize) -> Digest {
        let n = &self.nodes[i];
        match n.adversary.as_ref().and_then(|a| a.private.as_ref()) {
            Some(private) => private.last().expect("non-empty").hash,
            None => n.node.tip_block().hash,
        }
    }

    /// Keep one pending mining attempt per node, restarted whenever the block
    /// it would extend changes.
    fn reschedule(&mut self, i: usize) {
        if !self.wants_to_mine(i) {
            if self.nodes[i].mining_on.take().is_some() {
                self.nodes[i].epoch += 1;
            }
            return;
        }
        let base = self.mining_base(i);
        if self.nodes[i].mining_on == Some(base) {
            return;
        }
        self.nodes[i].epoch += 1;
        self.nodes[i].mining_on = Some(base);
        let rate = self.nodes[i].rate / self.scenario.block_time_ms;
        let delay = Exp::new(rate).expect("positive rate").sample(&mut self.rng);
        let at = self.now + (delay.ceil() as u64).max(1);
        let epoch = self.nodes[i].epoch;
        self.schedule(at, Ev::MineFound { node: i, epoch });
    }

    fn found_block(&mut self, i: usize) {
        if self.nodes[i].adversary.is_some() {
            self.adversary_block(i);
            return;
        }
        let ts = self.timestamp();
        match self.nodes[i].node.mine(ts) {
            Ok(fx) => self.apply_effects(i, fx),
            Err(e) => self.log(i, format!("mining failed: {e}")),
        }
    }

    fn start_attack(&mut self, i: usize) {
        let n = &self.nodes[i];
        let adv = n.adversary.as_ref().expect("adversary");
        if adv.private.is_some() {
            return;
        }
        let chain = n.node.chain();
        let keep = chain.len().saturating_sub(adv.spec.rewind as usize).max(1);
        let private = chain[..keep].to_vec();
        let from = private.len() as u64 - 1;
        self.nodes[i].adversary.as_mut().expect("adversary").private = Some(private);
        self.log(i, format!("private branch from block {from}"));
    }

    fn adversary_block(&mut self, i: usize) {
        self.start_attack(i);
        let ts = self.timestamp();
        let key = self.keys[&self.nodes[i].name].clone();
        let difficulty = self.params.difficulty();
        let adv = self.nodes[i].adversary.as_mut().expect("adversary");
        let private = adv.private.as_mut().expect("attack started");
        let prev = private.last().expect("non-empty").clone();
        let block = match seal_block(&prev, BlockData::default(), &key, ts.max(prev.timestamp), difficulty, self.exec, None) {
            Ok(b) => b,
            Err(e) => {
                self.log(i, format!("mining failed: {e}"));
                return;
            }
        };
        private.push(block.clone());
        self.produced.insert(block.hash);
        let private_height = block.index;
        let public_height = self.nodes[i].node.height();
        let kind = self.nodes[i].adversary.as_ref().expect("adversary").spec.kind;
        let release = match kind {
            AdversaryKind::NonMember => true,
            AdversaryKind::StolenKey => private_height > public_height,
        };
        self.log(i, format!("private block {private_height} (public height {public_height})"));
        if release {
            self.nodes[i].adversary.as_mut().expect("adversary").released = true;
            self.log(i, format!("released branch at height {private_height}"));
            let peers: Vec<usize> = (0..self.nodes.len()).filter(|&p| self.linked(i, p)).collect();
            for p in peers {
                self.send(i, p, WireMessage::AnnounceBlock(block.clone()));
            }
        }
    }

    fn script(&mut self, i: usize, action: Action) {
        match action {
            Action::Submit { node, tx } => {
                let n = self.index[&node];
                match self.build_tx(i, &tx) {
                    Ok(tx) => {
                        let label = format!("{} {}", tx.tx_id, tx.state_tag.label());
                        match self.nodes[n].node.submit(tx) {
                            Ok(fx) => {
                                self.apply_effects(n, fx);
                                self.reschedule(n);
                            }
                            Err(e) => {
                                self.log(n, format!("submit {label} rejected: {}", e.code()));
                                self.submit_failures.push(self.trace.last().expect("just logged").clone());
                            }
                        }
                    }
                    Err(e) => {
                        self.log(n, format!("submit failed: {e}"));
                        self.submit_failures.push(self.trace.last().expect("just logged").clone());
                    }
                }
            }
            Action::Mine { node } => {
                let n = self.index[&node];
                self.found_block(n);
                self.reschedule(n);
            }
            Action::Partition { groups } => {
                let mut map = BTreeMap::new();
                for (g, members) in groups.iter().enumerate() {
                    for m in members {
                        map.insert(self.index[m], g);
                    }
                }
                let desc: Vec<String> = groups.iter().map(|g| g.join(",")).collect();
                self.partition = Some(map);
                self.log(usize::MAX, format!("partition [{}]", desc.join("] [")));
            }
            Action::Heal => {
                self.partition = None;
                self.log(usize::MAX, "heal");
                let links: Vec<_> = self.links.iter().copied().collect();
                for (a, b) in links {
                    self.connect_pair(a, b);
                }
            }
            Action::Connect { a, b } => {
                let (a, b) = (self.index[&a], self.index[&b]);
                self.links.insert((a.min(b), a.max(b)));
                self.log(usize::MAX, format!("connect {} {}", self.nodes[a].name, self.nodes[b].name));
                self.connect_pair(a, b);
                self.reschedule(a);
                self.reschedule(b);
            }
            Action::Disconnect { a, b } => {
                let (a, b) = (self.index[&a], self.index[&b]);
                self.links.remove(&(a.min(b), a.max(b)));
                let (na, nb) = (self.nodes[a].name.clone(), self.nodes[b].name.clone());
                self.nodes[a].node.disconnect(&nb);
                self.nodes[b].node.disconnect(&na);
                self.log(usize::MAX, format!("disconnect {na} {nb}"));
            }
        }
    }

    fn build_tx(&self, event: usize, spec: &TxSpec) -> Result<crate::model::Transaction, ScenarioError> {
        let ts = self.timestamp();
        let signer = |name: &str| -> Result<Signer<'_>, ScenarioError> {
            let key = self
                .keys
                .get(name)
                .ok_or_else(|| ScenarioError::Invalid(format!("unknown entity {name}")))?;
            Ok(Signer::new(key, id(name)?))
        };
        let tx_id = |given: &Option<String>| -> Result<TxId, ScenarioError> {
            Ok(TxId::new(given.clone().unwrap_or_else(|| format!("tx-{event}")))?)
        };
        let ids = |names: &[String]| names.iter().map(|n| id(n)).collect::<Result<Vec<_>, _>>();
        let encode = |e: crate::codec::EncodeError| ScenarioError::Invalid(e.to_string());
        Ok(match spec {
            TxSpec::CreateRecord {
                author,
                record,
                keepers,
                rule,
                location,
                tx_id: t,
            } => signer(author)?
                .create_record(tx_id(t)?, RecordId::new(record.as_str())?, ids(keepers)?, *rule, location, ts)
                .map_err(encode)?,
            TxSpec::UpdateRecord {
                author,
                record,
                keepers,
                rule,
                location,
                tx_id: t,
            } => signer(author)?
                .update_record(tx_id(t)?, RecordId::new(record.as_str())?, ids(keepers)?, *rule, location, ts)
                .map_err(encode)?,
            TxSpec::RemoveRecord { author, record, tx_id: t } => signer(author)?
                .remove_record(tx_id(t)?, RecordId::new(record.as_str())?, ts)
                .map_err(encode)?,
            TxSpec::Register {
                author,
                name,
                role,
                tx_id: t,
            } => {
                let key = KeyPair::from_seed_label(self.scenario.seed, name);
                let entity = Entity {
                    id: id(name)?,
                    role: *role,
                    public_key: key.public(),
                };
                signer(author)?.register(tx_id(t)?, entity, ts).map_err(encode)?
            }
            TxSpec::Request {
                party,
                request,
                record,
                level,
                expiry,
            } => signer(party)?
                .request(
                    RequestId::new(request.as_str())?,
                    RecordId::new(record.as_str())?,
                    level.unwrap_or(PermissionLevel::Read),
                    *expiry,
                    ts,
                )
                .map_err(encode)?,
            TxSpec::Require { node, request } => signer(node)?
                .require(RequestId::new(request.as_str())?, ts)
                .map_err(encode)?,
            TxSpec::Vote { keeper, request, verdict } => {
                let tag = match verdict {
                    Verdict::Grant => StateTag::AuthGrant,
                    Verdict::Deny => StateTag::AuthDeny,
                };
                signer(keeper)?
                    .vote(RequestId::new(request.as_str())?, tag, ts)
                    .map_err(encode)?
            }
            TxSpec::Revoke { keeper, request } => signer(keeper)?
                .vote(RequestId::new(request.as_str())?, StateTag::AuthRevoke, ts)
                .map_err(encode)?,
        })
    }

    fn report(&self) -> SimReport {
        let honest: Vec<&Node> = self.honest_nodes().collect();
        let converged = honest
            .windows(2)
            .all(|w| w[0].tip_block().hash == w[1].tip_block().hash);
        let adopted = honest
            .iter()
            .map(|n| n.chain().iter().filter(|b| self.produced.contains(&b.hash)).count())
            .max()
            .unwrap_or(0);
        SimReport {
            scenario: self.scenario.name.clone(),
            seed: self.scenario.seed,
            end_ms: self.now,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeReport {
                    name: n.name.clone(),
                    adversary: n.adversary.as_ref().map(|a| a.spec.kind),
                    height: n.node.height(),
                    tip: n.node.tip_block().hash,
                    mempool: n.node.mempool().len(),
                })
                .collect(),
            converged,
            adversary_blocks_mined: self.produced.len(),
            adversary_blocks_adopted: adopted,
            reorgs: self.reorgs,
            max_reorg_depth: self.max_reorg_depth,
            rejected_blocks: self.rejected_blocks,
            submit_failures: self.submit_failures.clone(),
            trace: self.trace.clone(),
        }
    }
}

/// Run one scenario to completion.
pub fn simulate(scenario: &Scenario) -> Result<SimReport, ScenarioError> {
    Ok(Simulation::new(scenario.clone())?.run().0)
}

/// Run `scenario` once per seed. Seeds are independent, so `exec` spreads
/// them across threads; each run is itself sequential and deterministic.
pub fn sweep(scenario: &Scenario, seeds: &[u64], exec: Exec) -> Result<Vec<SimReport>, ScenarioError> {
    exec.map(seeds, |&seed| simulate(&scenario.with_seed(seed)))
        .into_iter()
        .collect()
}
