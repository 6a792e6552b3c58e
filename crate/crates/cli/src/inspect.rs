use std::path::PathBuf;

use anyhow::{anyhow, bail, Result};
use clap::Args;
use ledgergate_core::ledger::{validate_chain, Block};
use ledgergate_core::store::read_blocks;
use ledgergate_gateway::config::GatewayConfig;

#[derive(Args)]
pub struct InspectArgs {
    /// Block store file. Defaults to `<data_dir>/chain.bin` from the config.
    store: Option<PathBuf>,
    #[arg(long, env = "LEDGERGATE_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "LEDGERGATE_GENESIS")]
    genesis: Option<PathBuf>,
    #[arg(long, env = "LEDGERGATE_DIFFICULTY")]
    difficulty: Option<u32>,
    #[arg(long, env = "LEDGERGATE_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Also list every transaction.
    #[arg(long, short)]
    verbose: bool,
}

fn print_block(b: &Block, verbose: bool) {
    println!(
        "#{:<5} ts {} nonce {:<8} txs {:<3} hash {} prev {}",
        b.index,
        b.timestamp,
        b.nonce,
        b.data.len(),
        &b.hash.to_hex()[..16],
        &b.previous_hash.to_hex()[..16],
    );
    if verbose {
        for tx in b.data.iter() {
            println!("         {} {} by {}", tx.state_tag.label(), tx.tx_id, tx.author);
        }
    }
}

pub fn inspect(args: InspectArgs) -> Result<()> {
    let file = match &args.config {
        Some(p) => GatewayConfig::load(p)?,
        None => GatewayConfig::default(),
    };
    let cfg = file.merge(GatewayConfig {
        genesis: args.genesis,
        difficulty: args.difficulty,
        data_dir: args.data_dir,
        ..Default::default()
    });
    let store = match args.store.or_else(|| cfg.data_dir.as_ref().map(|d| d.join("chain.bin"))) {
        Some(p) => p,
        None => bail!("CONFIG_INVALID: no store path given and no data_dir configured"),
    };
    let setup = cfg.resolve_params()?;
    let blocks = read_blocks(&store)?;
    for b in &blocks {
        print_block(b, args.verbose);
    }
    match validate_chain(&blocks, &setup) {
        Ok(snap) => {
            println!(
                "valid height {} records {} requests {}",
                blocks.len().saturating_sub(1),
                snap.records().count(),
                snap.requests().count()
            );
            Ok(())
        }
        Err(fault) => Err(anyhow!("CORRUPT_STORE: first bad block {}: {}", fault.index, fault.fault)),
    }
}
