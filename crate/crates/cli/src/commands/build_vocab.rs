use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use procap_core::corpus::{load_corpus, IngredientVocabulary, Vocabulary};

use crate::manifest::ManifestBuilder;

use super::{ensure_out_dir, usage};

/// Build the word and ingredient vocabularies from a corpus.
#[derive(Args, Debug)]
pub struct BuildVocabArgs {
    /// Recipe corpus (JSON lines).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Vocabulary size cap, reserved tokens included. 30171 is the
    /// paper-scale setting.
    #[arg(long, default_value_t = 30171)]
    pub max_words: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &BuildVocabArgs) -> Result<()> {
    if args.max_words < 5 {
        return Err(usage("--max-words must be at least 5"));
    }
    ensure_out_dir(&args.out)?;
    let recipes = load_corpus(&args.corpus)?;
    let vocab = Vocabulary::build(&recipes, args.max_words)?;
    let iv = IngredientVocabulary::build(&recipes);

    let vocab_path = args.out.join("vocab.txt");
    let ing_path = args.out.join("ingredients.txt");
    vocab.save(&vocab_path)?;
    iv.save(&ing_path)?;
    log::info!(
        "vocabulary: {} tokens, ingredients: {} entries",
        vocab.size(),
        iv.size()
    );

    ManifestBuilder::new(
        "build-vocab",
        serde_json::json!({
            "corpus": args.corpus,
            "max_words": args.max_words,
        }),
        0,
    )
    .input(&args.corpus)
    .output(&vocab_path)
    .output(&ing_path)
    .write(&args.out)?;
    Ok(())
}
