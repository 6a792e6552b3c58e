//! Node runtime: one serialized node behind a mutex, a block store kept in
//! step with the node's chain, a background miner, the peer transport and
//! the HTTP listener.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use ledgergate_core::exec::Exec;
use ledgergate_core::ledger::MineError;
use ledgergate_core::network::{Effects, Node, NodeOptions, PeerId, WireMessage};
use ledgergate_core::store::{BlockStore, StoreError};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch, Notify};
use tokio::task::JoinSet;
use tracing::{debug, error, info, warn};

use crate::clock::Clock;
use crate::config::NodeSetup;
use crate::{api, transport};

const MINER_TICK: Duration = Duration::from_millis(250);

#[derive(Debug, Error)]
pub enum StartError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("BIND_FAILURE: {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
}

impl StartError {
    pub fn code(&self) -> &'static str {
        match self {
            StartError::Store(e) => e.code(),
            StartError::Bind { .. } => "BIND_FAILURE",
        }
    }
}

/// State shared by every task of one running node.
pub struct Shared {
    node: Mutex<Node>,
    store: Mutex<BlockStore>,
    peers: Mutex<HashMap<PeerId, mpsc::UnboundedSender<WireMessage>>>,
    wake: Notify,
    cancel: Mutex<Arc<AtomicBool>>,
    pub(crate) clock: Arc<dyn Clock>,
    pub(crate) exec: Exec,
    store_path: PathBuf,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Shared {
    /// Read-only access to the node.
    pub fn read<R>(&self, f: impl FnOnce(&Node) -> R) -> R {
        f(&lock(&self.node))
    }

    /// Run one node step. Chain changes reach the block store before the
    /// step's messages go out, and an in-flight mining job on the old tip is
    /// cancelled.
    pub fn apply<R>(&self, f: impl FnOnce(&mut Node) -> (R, Effects)) -> R {
        let mut node = lock(&self.node);
        let before = node.tip_block().hash;
        let (out, fx) = f(&mut node);
        if node.tip_block().hash != before {
            if let Err(e) = lock(&self.store).sync_to(node.chain()) {
                error!("persisting chain at height {}: {e}", node.height());
            }
            lock(&self.cancel).store(true, Ordering::SeqCst);
        }
        let wants = node.wants_to_mine();
        drop(node);
        self.dispatch(fx);
        if wants {
            self.wake.notify_one();
        }
        out
    }

    fn dispatch(&self, fx: Effects) {
        for ev in fx.events {
            info!("{ev}");
        }
        let peers = lock(&self.peers);
        for (to, msg) in fx.sends {
            match peers.get(&to) {
                Some(tx) => {
                    debug!("-> {to} {}", msg.label());
                    let _ = tx.send(msg);
                }
                None => debug!("dropping {} for disconnected peer {to}", msg.label()),
            }
        }
    }

    pub(crate) fn attach_peer(&self, id: &str, tx: mpsc::UnboundedSender<WireMessage>) {
        lock(&self.peers).insert(id.to_string(), tx);
        self.apply(|n| ((), n.connect(id)));
    }

    pub(crate) fn detach_peer(&self, id: &str) {
        lock(&self.peers).remove(id);
        lock(&self.node).disconnect(id);
    }

    /// Hold the store still while `f` inspects the file.
    pub fn with_store<R>(&self, f: impl FnOnce(&std::path::Path) -> R) -> R {
        let _guard = lock(&self.store);
        f(&self.store_path)
    }

    /// Mine one block on the current tip, waiting for the search. `Ok(None)`
    /// when the node cannot mine or the tip moved during the search.
    pub async fn mine_once(self: &Arc<Self>) -> Result<Option<u64>, MineError> {
        let Some(job) = self.read(|n| n.mining_job(self.clock.now())) else {
            return Ok(None);
        };
        let cancel = Arc::new(AtomicBool::new(false));
        *lock(&self.cancel) = cancel.clone();
        let exec = self.exec;
        let block = tokio::task::spawn_blocking(move || job.run(exec, Some(&cancel)))
            .await
            .expect("mining task panicked");
        match block {
            Ok(block) => {
                let (index, hash) = (block.index, block.hash);
                let me = self.clone();
                let adopted = tokio::task::spawn_blocking(move || {
                    me.apply(|n| {
                        let fx = n.on_mined(block);
                        (n.tip_block().hash == hash, fx)
                    })
                })
                .await
                .expect("node task panicked");
                Ok(adopted.then_some(index))
            }
            Err(MineError::Cancelled) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

async fn miner(shared: Arc<Shared>, mut stop: watch::Receiver<bool>) {
    loop {
        tokio::select! {
            _ = shared.wake.notified() => {}
            _ = tokio::time::sleep(MINER_TICK) => {}
            _ = stop.changed() => return,
        }
        if !shared.read(|n| n.wants_to_mine()) {
            continue;
        }
        if let Err(e) = shared.mine_once().await {
            warn!("mining failed: {e}");
        }
    }
}

/// A started node. Dropping it leaves the tasks running; call
/// [`Running::shutdown`] to stop them.
pub struct Running {
    pub http_addr: SocketAddr,
    pub p2p_addr: Option<SocketAddr>,
    pub shared: Arc<Shared>,
    stop: watch::Sender<bool>,
    tasks: JoinSet<()>,
}

impl Running {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.http_addr)
    }

    pub async fn shutdown(mut self) {
        let _ = self.stop.send(true);
        lock(&self.shared.cancel).store(true, Ordering::SeqCst);
        self.tasks.abort_all();
        while self.tasks.join_next().await.is_some() {}
    }
}

async fn bind(addr: &str) -> Result<TcpListener, StartError> {
    TcpListener::bind(addr).await.map_err(|source| StartError::Bind {
        addr: addr.to_string(),
        source,
    })
}

/// Open the store (refusing a corrupt one), then bring up HTTP, peers and
/// the miner.
pub async fn start(setup: NodeSetup) -> Result<Running, StartError> {
    let store_path = setup.store_path();
    let params = Arc::new(setup.params.clone());
    let (store, chain, tip) = {
        let params = params.clone();
        let path = store_path.clone();
        tokio::task::spawn_blocking(move || BlockStore::open(path, &params))
            .await
            .expect("store task panicked")?
    };
    info!("loaded {} blocks from {}", chain.len(), store_path.display());
    let opts = NodeOptions {
        max_block_txs: setup.max_block_txs,
        exec: setup.exec,
    };
    let node = Node::from_validated(setup.name.clone(), params, setup.key.clone(), chain, tip, opts);
    if !node.is_miner() {
        info!("no member key: running read-only");
    }
    let shared = Arc::new(Shared {
        node: Mutex::new(node),
        store: Mutex::new(store),
        peers: Mutex::new(HashMap::new()),
        wake: Notify::new(),
        cancel: Mutex::new(Arc::new(AtomicBool::new(false))),
        clock: setup.clock.clone(),
        exec: setup.exec,
        store_path,
    });

    let http = bind(&setup.http_listen).await?;
    let http_addr = http.local_addr().map_err(|source| StartError::Bind {
        addr: setup.http_listen.clone(),
        source,
    })?;
    let p2p = match &setup.p2p_listen {
        Some(a) => Some(bind(a).await?),
        None => None,
    };
    let p2p_addr = p2p.as_ref().and_then(|l| l.local_addr().ok());

    let (stop, stop_rx) = watch::channel(false);
    let mut tasks = JoinSet::new();
    let app = api::router(shared.clone());
    let mut http_stop = stop_rx.clone();
    tasks.spawn(async move {
        let graceful = async move {
            let _ = http_stop.changed().await;
        };
        if let Err(e) = axum::serve(http, app).with_graceful_shutdown(graceful).await {
            error!("http server: {e}");
        }
    });
    if let Some(listener) = p2p {
        tasks.spawn(transport::accept_loop(shared.clone(), listener));
    }
    for peer in &setup.peers {
        tasks.spawn(transport::dial_loop(shared.clone(), peer.clone()));
    }
    if setup.mine {
        tasks.spawn(miner(shared.clone(), stop_rx));
    }
    info!("{} serving http on {http_addr}", setup.name);
    Ok(Running {
        http_addr,
        p2p_addr,
        shared,
        stop,
        tasks,
    })
}
