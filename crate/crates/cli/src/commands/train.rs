use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use procap_core::checkpoint::{self, AdamSnapshot};
use procap_core::corpus::{load_corpus, Split};
use procap_core::model::{ModelConfig, ModelParams, Stage};
use procap_core::training::{
    default_epochs, prepare_recipes, ScheduledSampling, TrainConfig, Trainer,
};
use serde::Deserialize;

use crate::manifest::ManifestBuilder;

use super::{ensure_out_dir, resolve_seed, resolve_vocabs, usage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum StageArg {
    Text,
    Video,
    VideoText,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::Text => Stage::Text,
            StageArg::Video => Stage::Video,
            StageArg::VideoText => Stage::VideoText,
        }
    }
}

/// Train the text stage from scratch, or ground the video encoder on top of
/// a pretrained text checkpoint.
#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub stage: StageArg,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Vocabulary file; built from the corpus when omitted.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Ingredient vocabulary file; built from the corpus when omitted.
    #[arg(long)]
    pub ingredients: Option<PathBuf>,
    /// Pretrained checkpoint (required for the video stages).
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    /// JSON config file; flags take precedence over its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train without ingredient inputs (learned start vector instead).
    #[arg(long)]
    pub no_ing: bool,
    /// Add the squared-distance recipe loss to the objective.
    #[arg(long)]
    pub use_recipe_loss: bool,
    /// Disable scheduled sampling.
    #[arg(long)]
    pub no_scheduled_sampling: bool,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub enc_hidden: Option<usize>,
    /// Video feature width; defaults to the first manifest in the corpus.
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub max_words: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    alpha: Option<f64>,
    use_recipe_loss: Option<bool>,
    scheduled_sampling: Option<bool>,
    ss_prob: Option<f64>,
    ss_start_epoch: Option<usize>,
    seed: Option<u64>,
    clip_norm: Option<f64>,
    no_ing: Option<bool>,
    frame_stride: Option<usize>,
    embed_dim: Option<usize>,
    enc_hidden: Option<usize>,
    feature_dim: Option<usize>,
    max_words: Option<usize>,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let stage: Stage = args.stage.into();
    if matches!(stage, Stage::Video | Stage::VideoText) && args.pretrained.is_none() {
        return Err(usage("--stage video and video-text require --pretrained"));
    }
    ensure_out_dir(&args.out)?;

    let file_cfg: FileConfig = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("bad config {}: {e}", p.display())))?
        }
        None => FileConfig::default(),
    };

    let use_recipe_loss = args.use_recipe_loss || file_cfg.use_recipe_loss.unwrap_or(false);
    let seed = resolve_seed(args.seed.or(file_cfg.seed))?;
    let cfg = TrainConfig {
        stage,
        epochs: args
            .epochs
            .or(file_cfg.epochs)
            .unwrap_or_else(|| default_epochs(stage, use_recipe_loss)),
        batch_size: args.batch_size.or(file_cfg.batch_size).unwrap_or(50),
        lr: args.lr.or(file_cfg.lr).unwrap_or(0.001),
        alpha: args.alpha.or(file_cfg.alpha).unwrap_or(0.1),
        use_recipe_loss,
        scheduled_sampling: ScheduledSampling {
            enabled: !args.no_scheduled_sampling && file_cfg.scheduled_sampling.unwrap_or(true),
            prob: file_cfg.ss_prob.unwrap_or(0.5),
            start_epoch: file_cfg.ss_start_epoch.unwrap_or(5),
        },
        seed,
        clip_norm: args.clip_norm.or(file_cfg.clip_norm).unwrap_or(5.0),
        no_ing: args.no_ing || file_cfg.no_ing.unwrap_or(false),
        frame_stride: file_cfg.frame_stride.unwrap_or(5),
    };

    let recipes = load_corpus(&args.corpus)?;
    let max_words = args.max_words.or(file_cfg.max_words).unwrap_or(30171);
    let (vocab, iv) = resolve_vocabs(
        &recipes,
        args.vocab.as_deref(),
        args.ingredients.as_deref(),
        max_words,
    )?;

    let needs_video = matches!(stage, Stage::Video | Stage::VideoText);
    let train_recipes: Vec<_> = recipes.iter().filter(|r| r.split == Split::Train).cloned().collect();
    let val_recipes: Vec<_> = recipes.iter().filter(|r| r.split == Split::Val).cloned().collect();
    let train = prepare_recipes(&train_recipes, &vocab, &iv, needs_video)?;
    let val = prepare_recipes(&val_recipes, &vocab, &iv, needs_video)?;

    let params = match &args.pretrained {
        Some(ckpt) => {
            let (params, _) = checkpoint::load(ckpt)?;
            if params.config.vocab_size != vocab.size() {
                return Err(anyhow::anyhow!(
                    "checkpoint vocabulary size {} does not match corpus vocabulary {}",
                    params.config.vocab_size,
                    vocab.size()
                ));
            }
            params
        }
        None => {
            let feature_dim = args
                .feature_dim
                .or(file_cfg.feature_dim)
                .or_else(|| recipes.iter().find_map(|r| r.video.as_ref().map(|v| v.feature_dim)))
                .unwrap_or(2048);
            let model_config = ModelConfig {
                vocab_size: vocab.size(),
                ingredient_count: iv.size(),
                embed_dim: args.embed_dim.or(file_cfg.embed_dim).unwrap_or(256),
                enc_hidden: args.enc_hidden.or(file_cfg.enc_hidden).unwrap_or(512),
                feature_dim,
            };
            ModelParams::init(model_config, seed)
        }
    };

    let mut manifest = ManifestBuilder::new(
        "train",
        serde_json::to_value(&cfg)?,
        seed,
    );
    manifest.input(&args.corpus);
    if let Some(p) = &args.pretrained {
        manifest.input(p);
    }

    let mut trainer = Trainer::new(params, train, val, cfg.clone());
    let mut log_lines = String::new();
    for _ in 0..cfg.epochs {
        let stats = trainer.run_epoch()?;
        log::info!(
            "epoch {:3}  L_d {:10.3}  L_r {:10.3}  val {:?}",
            stats.epoch,
            stats.mean_ld,
            stats.mean_lr,
            stats.val_ld
        );
        log_lines.push_str(&serde_json::to_string(stats)?);
        log_lines.push('\n');
    }
    let (best, _log, adam) = trainer.finish();

    let ckpt_path = args.out.join("model.ckpt");
    let trainable: Vec<_> = best
        .params()
        .into_iter()
        .filter(|p| procap_core::model::trainable_in(&p.name, stage))
        .collect();
    let snapshot = AdamSnapshot {
        hyper: adam.hyper,
        t: adam.t,
        entries: trainable
            .iter()
            .zip(adam.m.iter().zip(adam.v.iter()))
            .map(|(p, (m, v))| (p.name.clone(), m.clone(), v.clone()))
            .collect(),
    };
    checkpoint::save(&ckpt_path, &best, Some(&snapshot))?;

    let log_path = args.out.join("train_log.jsonl");
    std::fs::write(&log_path, log_lines)?;
    let vocab_out = args.out.join("vocab.txt");
    let ing_out = args.out.join("ingredients.txt");
    vocab.save(&vocab_out)?;
    iv.save(&ing_out)?;

    manifest
        .output(&ckpt_path)
        .output(&log_path)
        .output(&vocab_out)
        .output(&ing_out)
        .write(&args.out)?;
    Ok(())
}
