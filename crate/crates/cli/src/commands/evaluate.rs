use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use procap_core::corpus::{load_corpus, IngredientVocabulary};
use procap_core::inference::read_traces;
use procap_core::metrics::{aggregate, ScoreMode, VerbLexicon};

use crate::manifest::ManifestBuilder;

use super::ensure_out_dir;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Exact,
    Future,
}

/// Score prediction traces against ground truth and aggregate per prefix and
/// horizon.
#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub ingredient_vocab: PathBuf,
    #[arg(long)]
    pub verb_lexicon: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let traces = read_traces(&args.traces)?;
    let recipes = load_corpus(&args.corpus)?;
    let iv = IngredientVocabulary::load(&args.ingredient_vocab)?;
    let lex = VerbLexicon::load(&args.verb_lexicon)?;
    let mode = match args.mode {
        ModeArg::Exact => ScoreMode::Exact,
        ModeArg::Future => ScoreMode::Future,
    };
    let report = aggregate(&traces, &recipes, &iv, &lex, mode)?;

    let json_path = args.out.join("report.json");
    let csv_path = args.out.join("report.csv");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
    std::fs::write(&csv_path, report.to_csv())?;
    for h in &report.horizons {
        log::info!(
            "horizon {}: BLEU1 {:.2} BLEU4 {:.2} METEOR {:.2} ING {:?} VERB {:?} (n={})",
            h.horizon,
            h.bleu1,
            h.bleu4,
            h.meteor,
            h.ingredient_recall,
            h.verb_recall,
            h.support
        );
    }

    ManifestBuilder::new(
        "evaluate",
        serde_json::json!({ "mode": format!("{:?}", args.mode) }),
        0,
    )
    .input(&args.traces)
    .input(&args.corpus)
    .input(&args.ingredient_vocab)
    .input(&args.verb_lexicon)
    .output(&json_path)
    .output(&csv_path)
    .write(&args.out)?;
    Ok(())
}
