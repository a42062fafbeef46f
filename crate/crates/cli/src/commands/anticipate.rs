use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use procap_core::checkpoint;
use procap_core::corpus::{load_corpus, Recipe};
use procap_core::inference::{
    anticipate, load_proposals, AnticipateOptions, ContextSource, DecodeMethod, PredictionTrace,
    SegmentationStrategy,
};
use procap_core::model::ModelParams;

use crate::manifest::ManifestBuilder;

use super::{ensure_out_dir, filter_split, resolve_vocabs, usage, SplitArg};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum DecodeArg {
    Greedy,
    Beam5,
}

/// Predict future steps for every observed prefix of each recipe.
#[derive(Args, Debug)]
pub struct AnticipateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub ingredients: Option<PathBuf>,
    /// Context: "text", "gt" (ground-truth video segments), "window:W", or
    /// "proposals:FILE".
    #[arg(long, default_value = "text")]
    pub strategy: String,
    #[arg(long, value_enum, default_value_t = DecodeArg::Greedy)]
    pub decode: DecodeArg,
    #[arg(long, default_value_t = 4)]
    pub horizons: usize,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 30)]
    pub max_len: usize,
    #[arg(long)]
    pub no_ing: bool,
    /// Dump per-timestep encoder states as feature files for pooling checks.
    #[arg(long)]
    pub dump_states: Option<PathBuf>,
    /// Worker threads; 1 is the bit-reproducible mode.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub enum StrategyArg {
    Text,
    Gt,
    Window(usize),
    Proposals(PathBuf),
}

pub fn window_strategy(width: usize) -> StrategyArg {
    StrategyArg::Window(width)
}

fn parse_strategy(s: &str) -> Result<StrategyArg> {
    if s == "text" {
        return Ok(StrategyArg::Text);
    }
    if s == "gt" {
        return Ok(StrategyArg::Gt);
    }
    if let Some(w) = s.strip_prefix("window:") {
        let width: usize = w
            .parse()
            .map_err(|_| usage(format!("bad window width in --strategy {s}")))?;
        if width == 0 {
            return Err(usage("window width must be at least 1"));
        }
        return Ok(StrategyArg::Window(width));
    }
    if let Some(p) = s.strip_prefix("proposals:") {
        return Ok(StrategyArg::Proposals(PathBuf::from(p)));
    }
    Err(usage(format!(
        "unknown --strategy {s}; expected text, gt, window:W or proposals:FILE"
    )))
}

fn source_for(
    recipe: &Recipe,
    strategy: &StrategyArg,
    proposals: &Option<std::collections::BTreeMap<String, Vec<(usize, usize)>>>,
) -> Option<ContextSource> {
    match strategy {
        StrategyArg::Text => Some(ContextSource::TextGt),
        StrategyArg::Gt => Some(ContextSource::Video(SegmentationStrategy::GroundTruth)),
        StrategyArg::Window(w) => Some(ContextSource::Video(SegmentationStrategy::FixedWindow {
            width: *w,
        })),
        StrategyArg::Proposals(_) => {
            let map = proposals.as_ref().expect("proposals loaded");
            map.get(&recipe.id).map(|list| {
                ContextSource::Video(SegmentationStrategy::ExternalProposals {
                    proposals: list.clone(),
                })
            })
        }
    }
}

/// Run anticipation over recipes, fanning out across `threads` workers and
/// merging results in input order.
pub fn run_traces(
    recipes: &[Recipe],
    params: &ModelParams<f32>,
    vocab: &procap_core::corpus::Vocabulary,
    iv: &procap_core::corpus::IngredientVocabulary,
    strategy: &StrategyArg,
    proposals: &Option<std::collections::BTreeMap<String, Vec<(usize, usize)>>>,
    opts: &AnticipateOptions,
    threads: usize,
) -> Result<Vec<PredictionTrace>> {
    let jobs: Vec<(usize, &Recipe, ContextSource)> = recipes
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            if matches!(
                strategy,
                StrategyArg::Gt | StrategyArg::Window(_) | StrategyArg::Proposals(_)
            ) && r.video.is_none()
            {
                log::warn!("skipping {}: no video manifest", r.id);
                return None;
            }
            match source_for(r, strategy, proposals) {
                Some(src) => Some((i, r, src)),
                None => {
                    log::warn!("skipping {}: no proposals for this recipe", r.id);
                    None
                }
            }
        })
        .collect();

    let workers = threads.max(1).min(jobs.len().max(1));
    let mut traces: Vec<(usize, PredictionTrace)> = if workers <= 1 {
        let mut out = Vec::with_capacity(jobs.len());
        for (i, r, src) in &jobs {
            out.push((*i, anticipate(r, params, vocab, iv, src, opts)?));
        }
        out
    } else {
        let chunks: Vec<&[(usize, &Recipe, ContextSource)]> =
            jobs.chunks(jobs.len().div_ceil(workers)).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|chunk| {
                    scope.spawn(move || {
                        chunk
                            .iter()
                            .map(|(i, r, src)| {
                                anticipate(r, params, vocab, iv, src, opts).map(|t| (*i, t))
                            })
                            .collect::<procap_core::Result<Vec<_>>>()
                    })
                })
                .collect();
            let mut out = Vec::with_capacity(jobs.len());
            for h in handles {
                out.extend(h.join().expect("worker panicked")?);
            }
            Ok::<_, procap_core::CoreError>(out)
        })?
    };
    traces.sort_by_key(|(i, _)| *i);
    Ok(traces.into_iter().map(|(_, t)| t).collect())
}

fn dump_encoder_states(
    dir: &Path,
    recipes: &[Recipe],
    params: &ModelParams<f32>,
    vocab: &procap_core::corpus::Vocabulary,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for r in recipes {
        for (j, step) in r.steps.iter().enumerate() {
            let ids = vocab.encode(&procap_core::corpus::tokenize(step));
            if ids.is_empty() {
                continue;
            }
            let mut tape = procap_core::autodiff::Tape::new();
            let bound = params.bind(&mut tape, None);
            let (_, ys) =
                procap_core::encoders::encode_sentence_states(&mut tape, &bound, params, &ids)?;
            let dim = params.config.repr_dim();
            let mut rows = Vec::with_capacity(ys.len() * dim);
            for y in &ys {
                rows.extend_from_slice(tape.value(*y).data());
            }
            let m = procap_core::autodiff::Tensor::matrix(ys.len(), dim, rows)?;
            procap_core::features::write_features(
                &dir.join(format!("{}_step{:02}_y.pcf", r.id, j + 1)),
                &m,
            )?;
        }
    }
    Ok(())
}

pub fn run(args: &AnticipateArgs) -> Result<()> {
    if args.horizons == 0 {
        return Err(usage("--horizons must be at least 1"));
    }
    ensure_out_dir(&args.out)?;
    let strategy = parse_strategy(&args.strategy)?;
    let (params, _) = checkpoint::load(&args.checkpoint)?;
    let all = load_corpus(&args.corpus)?;
    let (vocab, iv) = resolve_vocabs(
        &all,
        args.vocab.as_deref(),
        args.ingredients.as_deref(),
        params.config.vocab_size,
    )?;
    if vocab.size() != params.config.vocab_size {
        return Err(anyhow::anyhow!(
            "vocabulary size {} does not match checkpoint {}",
            vocab.size(),
            params.config.vocab_size
        ));
    }
    let recipes = filter_split(&all, args.split);
    let proposals = match &strategy {
        StrategyArg::Proposals(p) => Some(load_proposals(p)?),
        _ => None,
    };
    let opts = AnticipateOptions {
        horizons: args.horizons,
        decode: match args.decode {
            DecodeArg::Greedy => DecodeMethod::Greedy,
            DecodeArg::Beam5 => DecodeMethod::Beam5,
        },
        max_len: args.max_len,
        frame_stride: 5,
        no_ing: args.no_ing,
    };

    let traces = run_traces(
        &recipes, &params, &vocab, &iv, &strategy, &proposals, &opts, args.threads,
    )?;
    let traces_path = args.out.join("traces.jsonl");
    procap_core::inference::write_traces(&traces_path, &traces)?;
    log::info!("wrote {} traces", traces.len());

    if let Some(dir) = &args.dump_states {
        dump_encoder_states(dir, &recipes, &params, &vocab)?;
    }

    let mut manifest = ManifestBuilder::new(
        "anticipate",
        serde_json::json!({
            "strategy": args.strategy,
            "decode": format!("{:?}", args.decode),
            "horizons": args.horizons,
            "split": format!("{:?}", args.split),
            "max_len": args.max_len,
            "no_ing": args.no_ing,
            "threads": args.threads,
        }),
        0,
    );
    manifest.input(&args.checkpoint).input(&args.corpus);
    if let StrategyArg::Proposals(p) = &strategy {
        manifest.input(p);
    }
    manifest.output(&traces_path).write(&args.out)?;
    Ok(())
}
