pub mod anticipate;
pub mod build_vocab;
pub mod evaluate;
pub mod fixtures;
pub mod sweep;
pub mod train;

use std::fmt;
use std::path::Path;

use anyhow::Result;
use procap_core::corpus::{IngredientVocabulary, Recipe, Split, Vocabulary};
use procap_core::CoreError;

/// Bad flag combinations and unparseable flag values; exits with code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// 0 success, 1 usage error, 2 data error, 3 numerical failure.
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return if core.is_numerical() { 3 } else { 2 };
        }
    }
    2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

pub fn filter_split(recipes: &[Recipe], split: SplitArg) -> Vec<Recipe> {
    recipes
        .iter()
        .filter(|r| match split {
            SplitArg::Train => r.split == Split::Train,
            SplitArg::Val => r.split == Split::Val,
            SplitArg::Test => r.split == Split::Test,
            SplitArg::All => true,
        })
        .cloned()
        .collect()
}

/// Load vocabularies from files when given, otherwise build them
/// deterministically from the corpus train split.
pub fn resolve_vocabs(
    recipes: &[Recipe],
    vocab_path: Option<&Path>,
    ingredients_path: Option<&Path>,
    max_words: usize,
) -> Result<(Vocabulary, IngredientVocabulary)> {
    let vocab = match vocab_path {
        Some(p) => Vocabulary::load(p)?,
        None => Vocabulary::build(recipes, max_words)?,
    };
    let iv = match ingredients_path {
        Some(p) => IngredientVocabulary::load(p)?,
        None => IngredientVocabulary::build(recipes),
    };
    Ok((vocab, iv))
}

pub fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| anyhow::anyhow!("cannot create output directory {}: {e}", dir.display()))
}

/// Seed resolution: explicit flag, then PROCAP_SEED, then 42.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("PROCAP_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|_| usage(format!("PROCAP_SEED is not an integer: {v}"))),
        Err(_) => Ok(42),
    }
}
