use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use ledgergate_core::model::{AgreementRule, Entity, EntityId, PermissionLevel, RecordId, RequestId, Role, TxId};
use ledgergate_gateway::client::AccessResponse;
use ledgergate_gateway::keys;
use ledgergate_gateway::types::*;
use ledgergate_gateway::Client;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Args)]
pub struct SubmitArgs {
    /// Gateway base URL.
    #[arg(long, env = "LEDGERGATE_NODE", default_value = "http://127.0.0.1:8080")]
    node: String,
    /// Secret key file of the signing entity.
    #[arg(long, env = "LEDGERGATE_KEY")]
    key: PathBuf,
    /// Entity id of the signer; defaults to the id derived from the key.
    #[arg(long = "as", env = "LEDGERGATE_AS")]
    author: Option<String>,
    /// Transaction timestamp; defaults to now.
    #[arg(long)]
    timestamp: Option<u64>,
    #[command(subcommand)]
    tx: TxCommand,
}

/// Parse a wire enum (`MAJORITY`, `read`, ...) case-insensitively.
fn wire_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_uppercase().replace('-', "_")))
        .map_err(|e| e.to_string())
}

#[derive(Args)]
struct RecordArgs {
    #[arg(long)]
    tx_id: String,
    #[arg(long)]
    record: String,
    /// Keeper entity id (repeatable); the signer must be among them.
    #[arg(long = "keeper", required = true)]
    keepers: Vec<String>,
    #[arg(long, value_parser = wire_enum::<AgreementRule>, default_value = "ANY")]
    rule: AgreementRule,
    #[arg(long)]
    location: String,
}

#[derive(Subcommand)]
enum TxCommand {
    CreateRecord(RecordArgs),
    UpdateRecord(RecordArgs),
    RemoveRecord {
        #[arg(long)]
        tx_id: String,
        #[arg(long)]
        record: String,
    },
    /// Register the holder of a public key file.
    Register {
        #[arg(long)]
        tx_id: String,
        #[arg(long)]
        public_key: PathBuf,
        #[arg(long, value_parser = wire_enum::<Role>)]
        role: Role,
    },
    /// Ask for access as the signing party.
    Request {
        #[arg(long)]
        request: String,
        #[arg(long)]
        record: String,
        #[arg(long, value_parser = wire_enum::<PermissionLevel>, default_value = "READ")]
        level: PermissionLevel,
        #[arg(long)]
        expiry: Option<u64>,
    },
    Vote {
        #[arg(long)]
        request: String,
        #[arg(long, value_parser = wire_enum::<Verdict>)]
        verdict: Verdict,
    },
    Revoke {
        #[arg(long)]
        request: String,
    },
}

fn print<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

pub fn submit(args: SubmitArgs) -> Result<()> {
    let key = keys::read_secret(&args.key)?;
    let author: EntityId = match args.author {
        Some(a) => a.parse()?,
        None => key.entity_id(),
    };
    let ts = args.timestamp.unwrap_or_else(|| {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    });
    let client = Client::new(args.node);
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .context("IO_FAILURE: starting runtime")?;
    let record_body = |r: RecordArgs| -> Result<RecordBody> {
        Ok(RecordBody {
            tx_id: TxId::new(r.tx_id)?,
            author: author.clone(),
            record_id: RecordId::new(r.record)?,
            keepers: r.keepers.into_iter().map(EntityId::new).collect::<Result<_, _>>()?,
            agreement: r.rule,
            location: r.location,
            timestamp: ts,
        })
    };
    rt.block_on(async {
        match args.tx {
            TxCommand::CreateRecord(r) => print(&client.create_record(&record_body(r)?, &key).await?),
            TxCommand::UpdateRecord(r) => print(&client.update_record(&record_body(r)?, &key).await?),
            TxCommand::RemoveRecord { tx_id, record } => {
                let body = RemoveBody {
                    tx_id: TxId::new(tx_id)?,
                    author: author.clone(),
                    record_id: RecordId::new(record)?,
                    timestamp: ts,
                };
                print(&client.remove_record(&body, &key).await?)
            }
            TxCommand::Register { tx_id, public_key, role } => {
                let public_key = keys::read_public(&public_key)?;
                let body = EntityBody {
                    tx_id: TxId::new(tx_id)?,
                    author: author.clone(),
                    entity: Entity {
                        id: public_key.entity_id(),
                        role,
                        public_key,
                    },
                    timestamp: ts,
                };
                print(&client.register(&body, &key).await?)
            }
            TxCommand::Request { request, record, level, expiry } => {
                let body = AccessRequestBody {
                    request_id: RequestId::new(request)?,
                    party: author.clone(),
                    record: RecordId::new(record)?,
                    level,
                    expiry,
                    timestamp: ts,
                };
                match client.access_request(&body, &key).await? {
                    AccessResponse::Decided(d) => print(&d),
                    AccessResponse::Pending(p) => print(&p),
                }
            }
            TxCommand::Vote { request, verdict } => {
                let body = AuthorizationBody {
                    request_id: RequestId::new(request)?,
                    keeper: author.clone(),
                    verdict,
                    timestamp: ts,
                };
                print(&client.authorize(&body, &key).await?)
            }
            TxCommand::Revoke { request } => {
                let body = RevocationBody {
                    request_id: RequestId::new(request)?,
                    keeper: author.clone(),
                    timestamp: ts,
                };
                print(&client.revoke(&body, &key).await?)
            }
        }
    })
}
