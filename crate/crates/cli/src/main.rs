//! `ledgergate`: operator tool for a consortium access-control node.

mod inspect;
mod submit;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use ledgergate_core::crypto::KeyPair;
use ledgergate_core::ledger::GenesisConfig;
use ledgergate_core::model::{Entity, Role};
use ledgergate_core::network::sim::{simulate, Scenario};
use ledgergate_gateway::config::GatewayConfig;
use ledgergate_gateway::keys;

#[derive(Parser)]
#[command(name = "ledgergate", version, about = "Consortium blockchain access control for health records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key pair: <OUT>.key (owner-only) and <OUT>.pub.
    Keygen {
        #[arg(long, short, env = "LEDGERGATE_OUT")]
        out: PathBuf,
    },
    /// Write a genesis configuration from public key files.
    Genesis(GenesisArgs),
    /// Run a node: gateway API, peer protocol and miner.
    Run(RunArgs),
    /// Dump and validate a block store.
    Inspect(inspect::InspectArgs),
    /// Run a simulator scenario and print its trace and verdicts.
    Sim(SimArgs),
    /// Sign a transaction and submit it to a gateway.
    Submit(submit::SubmitArgs),
}

#[derive(Args)]
struct GenesisArgs {
    /// Consortium member public key (repeatable).
    #[arg(long = "member", required = true)]
    members: Vec<PathBuf>,
    /// Data keeper public key (repeatable).
    #[arg(long = "keeper")]
    keepers: Vec<PathBuf>,
    /// Third party public key (repeatable).
    #[arg(long = "party")]
    parties: Vec<PathBuf>,
    #[arg(long, env = "LEDGERGATE_DIFFICULTY", default_value_t = 16)]
    difficulty: u32,
    #[arg(long, default_value_t = 1_700_000_000)]
    timestamp: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, env = "LEDGERGATE_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "LEDGERGATE_DIFFICULTY")]
    difficulty: Option<u32>,
    /// HTTP listen address.
    #[arg(long, env = "LEDGERGATE_LISTEN")]
    listen: Option<String>,
    /// Peer protocol listen address.
    #[arg(long, env = "LEDGERGATE_P2P_LISTEN")]
    p2p_listen: Option<String>,
    /// Peer address to dial (repeatable).
    #[arg(long = "peer", env = "LEDGERGATE_PEER", value_delimiter = ',')]
    peers: Vec<String>,
    #[arg(long, env = "LEDGERGATE_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[arg(long, env = "LEDGERGATE_KEY")]
    key: Option<PathBuf>,
    #[arg(long, env = "LEDGERGATE_GENESIS")]
    genesis: Option<PathBuf>,
    #[arg(long, env = "LEDGERGATE_NAME")]
    name: Option<String>,
    /// Serve and relay without mining.
    #[arg(long, env = "LEDGERGATE_NO_MINE")]
    no_mine: bool,
}

#[derive(Args)]
struct SimArgs {
    scenario: PathBuf,
    /// Replaces the scenario's seed.
    #[arg(long, env = "LEDGERGATE_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "LEDGERGATE_DIFFICULTY")]
    difficulty: Option<u32>,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    json: bool,
}

fn keygen(out: PathBuf) -> Result<()> {
    let key = KeyPair::generate();
    let (secret, public) = keys::write_pair(&out, &key)?;
    println!("entity   {}", key.entity_id());
    println!("secret   {}", secret.display());
    println!("public   {}", public.display());
    Ok(())
}

fn genesis(args: GenesisArgs) -> Result<()> {
    let load = |paths: &[PathBuf], role| -> Result<Vec<Entity>> {
        paths
            .iter()
            .map(|p| {
                let public_key = keys::read_public(p)?;
                Ok(Entity {
                    id: public_key.entity_id(),
                    role,
                    public_key,
                })
            })
            .collect()
    };
    let mut entities = load(&args.keepers, Role::DataKeeper)?;
    entities.extend(load(&args.parties, Role::ThirdParty)?);
    let config = GenesisConfig {
        timestamp: args.timestamp,
        difficulty: args.difficulty,
        members: load(&args.members, Role::ConsortiumNode)?,
        entities,
    };
    config.check().map_err(|e| anyhow!("CONFIG_INVALID: {e}"))?;
    let text = serde_json::to_string_pretty(&config)?;
    std::fs::write(&args.out, text + "\n").with_context(|| format!("IO_FAILURE: {}", args.out.display()))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let file = match &args.config {
        Some(p) => GatewayConfig::load(p)?,
        None => GatewayConfig::default(),
    };
    let flags = GatewayConfig {
        name: args.name,
        key: args.key,
        genesis: args.genesis,
        data_dir: args.data_dir,
        http_listen: args.listen,
        p2p_listen: args.p2p_listen,
        peers: args.peers,
        difficulty: args.difficulty,
        mine: args.no_mine.then_some(false),
        max_block_txs: None,
    };
    let setup = file.merge(flags).resolve()?;
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("LEDGERGATE_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let rt = tokio::runtime::Runtime::new().context("IO_FAILURE: starting runtime")?;
    rt.block_on(async move {
        let running = ledgergate_gateway::start(setup).await?;
        println!("listening http={} p2p={}", running.http_addr, running.p2p_addr.map(|a| a.to_string()).unwrap_or_else(|| "-".into()));
        tokio::signal::ctrl_c().await.context("IO_FAILURE: waiting for shutdown signal")?;
        running.shutdown().await;
        Ok(())
    })
}

fn sim(args: SimArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.scenario)
        .with_context(|| format!("IO_FAILURE: {}", args.scenario.display()))?;
    let mut scenario = Scenario::from_json(&text)?;
    if let Some(seed) = args.seed {
        scenario = scenario.with_seed(seed);
    }
    if let Some(d) = args.difficulty {
        scenario.difficulty = d;
    }
    let report = simulate(&scenario)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    for line in &report.trace {
        println!("{:>8}ms {:<6} {}", line.at_ms, line.node, line.text);
    }
    println!("scenario {} seed {} end {}ms", report.scenario, report.seed, report.end_ms);
    for n in &report.nodes {
        let role = n.adversary.map(|a| format!(" ({a:?})")).unwrap_or_default();
        println!("node {:<6} height {:>4} tip {}{role}", n.name, n.height, &n.tip.to_hex()[..16]);
    }
    println!("converged {}", report.converged);
    println!("reorgs {} max-depth {}", report.reorgs, report.max_reorg_depth);
    println!(
        "adversary-blocks mined {} adopted {}",
        report.adversary_blocks_mined, report.adversary_blocks_adopted
    );
    println!("rejected-blocks {}", report.rejected_blocks);
    for f in &report.submit_failures {
        println!("submit-failure {}ms {} {}", f.at_ms, f.node, f.text);
    }
    Ok(())
}

/// Leading `CODE:` of an error message, if it has one.
fn error_code(msg: &str) -> &str {
    let head = msg.split(':').next().unwrap_or("");
    if !head.is_empty() && head.bytes().all(|b| b.is_ascii_uppercase() || b == b'_') {
        head
    } else {
        "ERROR"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Keygen { out } => keygen(out),
        Command::Genesis(a) => genesis(a),
        Command::Run(a) => run(a),
        Command::Inspect(a) => inspect::inspect(a),
        Command::Sim(a) => sim(a),
        Command::Submit(a) => submit::submit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}");
            eprintln!("error: {msg}");
            eprintln!("code: {}", error_code(&msg));
            ExitCode::FAILURE
        }
    }
}
