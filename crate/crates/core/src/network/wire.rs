//! Peer messages and their framing: a 4-byte big-endian length followed by
//! the JSON body.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::ledger::Block;
use crate::model::Transaction;

/// Upper bound on one frame body.
pub const MAX_FRAME: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WireMessage {
    Hello { node: String, height: u64 },
    GetLatest,
    Latest(Block),
    GetChain,
    Chain(Vec<Block>),
    AnnounceBlock(Block),
    SubmitTx(Transaction),
}

impl WireMessage {
    pub fn label(&self) -> &'static str {
        match self {
            WireMessage::Hello { .. } => "HELLO",
            WireMessage::GetLatest => "GET_LATEST",
            WireMessage::Latest(_) => "LATEST",
            WireMessage::GetChain => "GET_CHAIN",
            WireMessage::Chain(_) => "CHAIN",
            WireMessage::AnnounceBlock(_) => "ANNOUNCE_BLOCK",
            WireMessage::SubmitTx(_) => "SUBMIT_TX",
        }
    }
}

pub fn encode_frame(msg: &WireMessage) -> Vec<u8> {
    let body = serde_json::to_vec(msg).expect("wire messages serialize");
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn decode_body(body: &[u8]) -> io::Result<WireMessage> {
    serde_json::from_slice(body).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Parse the length prefix, rejecting oversized frames.
pub fn frame_len(prefix: [u8; 4]) -> io::Result<usize> {
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds limit"),
        ));
    }
    Ok(len)
}

pub fn write_frame(w: &mut impl Write, msg: &WireMessage) -> io::Result<()> {
    w.write_all(&encode_frame(msg))?;
    w.flush()
}

pub fn read_frame(r: &mut impl Read) -> io::Result<WireMessage> {
    let mut prefix = [0u8; 4];
    r.read_exact(&mut prefix)?;
    let mut body = vec![0u8; frame_len(prefix)?];
    r.read_exact(&mut body)?;
    decode_body(&body)
}
