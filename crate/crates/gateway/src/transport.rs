//! Peer links over TCP, one length-prefixed JSON message per frame.
//!
//! Inbound links are named `in:<addr>`, outbound links by the dialled
//! address. Outbound links are re-dialled after they drop.

use std::sync::Arc;
use std::time::Duration;

use ledgergate_core::network::wire::{decode_body, encode_frame, frame_len};
use ledgergate_core::network::WireMessage;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tracing::{debug, info, warn};

use crate::runtime::Shared;

const REDIAL: Duration = Duration::from_secs(1);

pub(crate) async fn accept_loop(shared: Arc<Shared>, listener: TcpListener) {
    loop {
        match listener.accept().await {
            Ok((stream, addr)) => {
                tokio::spawn(run_link(shared.clone(), format!("in:{addr}"), stream));
            }
            Err(e) => {
                warn!("accepting peer: {e}");
                tokio::time::sleep(REDIAL).await;
            }
        }
    }
}

pub(crate) async fn dial_loop(shared: Arc<Shared>, addr: String) {
    loop {
        match TcpStream::connect(&addr).await {
            Ok(stream) => run_link(shared.clone(), addr.clone(), stream).await,
            Err(e) => debug!("dialling {addr}: {e}"),
        }
        tokio::time::sleep(REDIAL).await;
    }
}

async fn read_message(stream: &mut (impl AsyncReadExt + Unpin)) -> std::io::Result<WireMessage> {
    let mut prefix = [0u8; 4];
    stream.read_exact(&mut prefix).await?;
    let mut body = vec![0u8; frame_len(prefix)?];
    stream.read_exact(&mut body).await?;
    decode_body(&body)
}

async fn run_link(shared: Arc<Shared>, id: String, stream: TcpStream) {
    let _ = stream.set_nodelay(true);
    let (mut rd, mut wr) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<WireMessage>();
    let writer = tokio::spawn(async move {
        while let Some(msg) = rx.recv().await {
            if wr.write_all(&encode_frame(&msg)).await.is_err() {
                break;
            }
        }
    });
    info!("peer {id} connected");
    {
        let (shared, id) = (shared.clone(), id.clone());
        let _ = tokio::task::spawn_blocking(move || shared.attach_peer(&id, tx)).await;
    }
    loop {
        let msg = match read_message(&mut rd).await {
            Ok(m) => m,
            Err(e) => {
                debug!("peer {id}: {e}");
                break;
            }
        };
        debug!("<- {id} {}", msg.label());
        let (s, from) = (shared.clone(), id.clone());
        let step = tokio::task::spawn_blocking(move || s.apply(|n| ((), n.handle(&from, msg))));
        if step.await.is_err() {
            break;
        }
    }
    shared.detach_peer(&id);
    writer.abort();
    info!("peer {id} disconnected");
}
