use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use procap_core::checkpoint;
use procap_core::corpus::load_corpus;
use procap_core::inference::AnticipateOptions;
use procap_core::metrics::{aggregate, ScoreMode, VerbLexicon};

use crate::manifest::ManifestBuilder;

use super::anticipate::run_traces;
use super::{ensure_out_dir, filter_split, resolve_vocabs, usage, SplitArg};

/// Sweep fixed-window widths and report next-step BLEU4 per width.
#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub ingredients: Option<PathBuf>,
    #[arg(long)]
    pub verb_lexicon: PathBuf,
    /// Comma-separated window widths, e.g. 30,50,70.
    #[arg(long)]
    pub widths: String,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &SweepArgs) -> Result<()> {
    let widths: Vec<usize> = args
        .widths
        .split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .map_err(|_| usage(format!("bad width {w} in --widths")))
        })
        .collect::<Result<Vec<_>>>()?;
    if widths.is_empty() {
        return Err(usage("--widths must list at least one width"));
    }
    ensure_out_dir(&args.out)?;

    let (params, _) = checkpoint::load(&args.checkpoint)?;
    let all = load_corpus(&args.corpus)?;
    let (vocab, iv) = resolve_vocabs(
        &all,
        args.vocab.as_deref(),
        args.ingredients.as_deref(),
        params.config.vocab_size,
    )?;
    let lex = VerbLexicon::load(&args.verb_lexicon)?;
    let recipes = filter_split(&all, args.split);
    let opts = AnticipateOptions::default();

    let mut scores = Vec::with_capacity(widths.len());
    for &w in &widths {
        let strategy = super::anticipate::window_strategy(w);
        let traces = run_traces(
            &recipes, &params, &vocab, &iv, &strategy, &None, &opts, args.threads,
        )?;
        let report = aggregate(&traces, &recipes, &iv, &lex, ScoreMode::Exact)?;
        let bleu4 = report
            .horizons
            .iter()
            .find(|h| h.horizon == 1)
            .map(|h| h.bleu4)
            .unwrap_or(0.0);
        log::info!("width {w}: next-step BLEU4 {bleu4:.3}");
        scores.push(bleu4);
    }

    let csv_path = args.out.join("sweep.csv");
    let header: Vec<String> = widths.iter().map(|w| format!("width_{w}")).collect();
    let row: Vec<String> = scores.iter().map(|s| format!("{s:.4}")).collect();
    std::fs::write(&csv_path, format!("{}\n{}\n", header.join(","), row.join(",")))?;

    let json_path = args.out.join("sweep.json");
    let best = widths
        .iter()
        .zip(&scores)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(w, _)| *w);
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "widths": widths,
            "bleu4": scores,
            "best_width": best,
        }))?,
    )?;

    ManifestBuilder::new(
        "sweep-window",
        serde_json::json!({ "widths": widths, "split": format!("{:?}", args.split) }),
        0,
    )
    .input(&args.checkpoint)
    .input(&args.corpus)
    .output(&csv_path)
    .output(&json_path)
    .write(&args.out)?;
    Ok(())
}
