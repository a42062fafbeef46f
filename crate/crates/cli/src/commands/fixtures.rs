use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use procap_core::fixtures::generate_toy_corpus;

use crate::manifest::ManifestBuilder;

use super::{ensure_out_dir, resolve_seed};

/// Generate the synthetic 20-recipe toy corpus with video features and
/// segment proposals.
#[derive(Args, Debug)]
pub struct MakeFixturesArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: &MakeFixturesArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let seed = resolve_seed(args.seed)?;
    let fx = generate_toy_corpus(&args.out, seed)?;
    log::info!("wrote toy corpus to {}", fx.dir.display());
    ManifestBuilder::new("make-fixtures", serde_json::json!({ "seed": seed }), seed)
        .output(&fx.corpus)
        .output(&fx.proposals)
        .write(&args.out)?;
    Ok(())
}
