//! Two-stage training: joint SE+RE+SD text training, then VE grounding with
//! the text networks frozen. Loss is the teacher-forced decoder NLL plus an
//! optional squared-distance recipe loss weighted by alpha.

use std::time::Instant;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamHyper, AdamState, Scalar, Tape, Tensor, Var};
use crate::corpus::{encode_ingredients, tokenize, IngredientVocabulary, Recipe, Vocabulary, EOS};
use crate::decoder::teacher_forced_nll;
use crate::encoders::{encode_sentence, encode_video_segment, fuse, FRAME_STRIDE};
use crate::error::{CoreError, Result};
use crate::features;
use crate::model::{BoundModel, ModelParams, Stage};
use crate::recipe_net::{advance, init_from_ingredients, init_without_ingredients};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledSampling {
    pub enabled: bool,
    /// Probability of replacing a teacher-forced input with the model's own
    /// prediction.
    pub prob: f64,
    /// Sampling activates on epochs strictly after this one (1-based).
    pub start_epoch: usize,
}

impl Default for ScheduledSampling {
    fn default() -> Self {
        ScheduledSampling {
            enabled: true,
            prob: 0.5,
            start_epoch: 5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub alpha: f64,
    pub use_recipe_loss: bool,
    pub scheduled_sampling: ScheduledSampling,
    pub seed: u64,
    pub clip_norm: f64,
    pub no_ing: bool,
    pub frame_stride: usize,
}

impl TrainConfig {
    pub fn for_stage(stage: Stage, seed: u64) -> Self {
        TrainConfig {
            stage,
            epochs: default_epochs(stage, false),
            batch_size: 50,
            lr: 0.001,
            alpha: 0.1,
            use_recipe_loss: false,
            scheduled_sampling: ScheduledSampling::default(),
            seed,
            clip_norm: 5.0,
            no_ing: false,
            frame_stride: FRAME_STRIDE,
        }
    }
}

/// Text trains for 50 epochs (10 when the recipe loss is on, which converges
/// faster); the visual stages train for 25.
pub fn default_epochs(stage: Stage, use_recipe_loss: bool) -> usize {
    match stage {
        Stage::Text => {
            if use_recipe_loss {
                10
            } else {
                50
            }
        }
        Stage::Video | Stage::VideoText => 25,
    }
}

/// A recipe preprocessed for training: token ids, decoder targets with EOS,
/// the multi-hot ingredient vector, and loaded video features.
#[derive(Clone, Debug)]
pub struct PreparedRecipe {
    pub id: String,
    pub step_ids: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
    pub ing_vec: Vec<f32>,
    pub has_ingredients: bool,
    pub video: Option<PreparedVideo>,
}

#[derive(Clone, Debug)]
pub struct PreparedVideo {
    pub frames: Tensor<f32>,
    pub segments: Vec<(usize, usize)>,
}

pub fn prepare_recipe(
    recipe: &Recipe,
    vocab: &Vocabulary,
    iv: &IngredientVocabulary,
    load_video: bool,
) -> Result<PreparedRecipe> {
    let mut step_ids = Vec::with_capacity(recipe.steps.len());
    let mut targets = Vec::with_capacity(recipe.steps.len());
    for step in &recipe.steps {
        let ids = vocab.encode(&tokenize(step));
        let mut tgt = ids.clone();
        tgt.push(EOS);
        step_ids.push(ids);
        targets.push(tgt);
    }
    let (ing_vec, _) = encode_ingredients(recipe, iv);
    let video = match (&recipe.video, load_video) {
        (Some(m), true) => Some(PreparedVideo {
            frames: features::load_features(m)?,
            segments: m.segments.clone(),
        }),
        _ => None,
    };
    Ok(PreparedRecipe {
        id: recipe.id.clone(),
        step_ids,
        targets,
        ing_vec,
        has_ingredients: !recipe.ingredients.is_empty(),
        video,
    })
}

pub fn prepare_recipes(
    recipes: &[Recipe],
    vocab: &Vocabulary,
    iv: &IngredientVocabulary,
    load_video: bool,
) -> Result<Vec<PreparedRecipe>> {
    recipes
        .iter()
        .map(|r| prepare_recipe(r, vocab, iv, load_video))
        .collect()
}

/// Why a recipe cannot be used for a given stage, if it cannot.
fn unusable_reason(prep: &PreparedRecipe, stage: Stage, no_ing: bool) -> Option<&'static str> {
    if !no_ing && !prep.has_ingredients {
        return Some("no ingredients (enable noING to train without them)");
    }
    if matches!(stage, Stage::Video | Stage::VideoText) {
        match &prep.video {
            None => return Some("no video manifest"),
            Some(v) if v.segments.len() != prep.step_ids.len() => {
                return Some("segment count does not match step count")
            }
            _ => {}
        }
    }
    None
}

/// Loss terms of one recipe, as tape variables plus extracted values.
pub struct RecipeLoss {
    pub ld: Var,
    pub lr: Var,
    pub total: Var,
    pub ld_value: f64,
    pub lr_value: f64,
}

/// Forward pass over one recipe: encode each step (SE, VE, or both fused),
/// roll the recipe RNN from the ingredient initialization, score each step's
/// sentence from the prediction, and optionally accumulate the recipe loss.
/// `ss_replace[j]` requests feeding the model's own prediction instead of the
/// encoding of step j+1.
#[allow(clippy::too_many_arguments)]
pub fn recipe_forward_loss<F: Scalar>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    params: &ModelParams<F>,
    prep: &PreparedRecipe,
    stage: Stage,
    cfg_alpha: f64,
    use_recipe_loss: bool,
    frame_stride: usize,
    no_ing: bool,
    ss_replace: &[bool],
    ss_replacements: &mut u64,
) -> Result<RecipeLoss> {
    let n = prep.step_ids.len();

    // Context encodings r_1..r_N for the stage's modality.
    let frames = prep.video.as_ref().map(|v| Tensor::from_f32(&v.frames));
    let mut contexts: Vec<Var> = Vec::with_capacity(n);
    for j in 0..n {
        let repr = match stage {
            Stage::Text => encode_sentence(tape, bound, params, &prep.step_ids[j])?,
            Stage::Video => {
                let video = prep.video.as_ref().ok_or_else(|| {
                    CoreError::invalid(format!("recipe {} has no video manifest", prep.id))
                })?;
                let frames = frames.as_ref().expect("frames loaded with video");
                encode_video_segment(tape, bound, params, frames, video.segments[j], frame_stride)?
            }
            Stage::VideoText => {
                let video = prep.video.as_ref().ok_or_else(|| {
                    CoreError::invalid(format!("recipe {} has no video manifest", prep.id))
                })?;
                let frames = frames.as_ref().expect("frames loaded with video");
                let t = encode_sentence(tape, bound, params, &prep.step_ids[j])?;
                let v = encode_video_segment(
                    tape,
                    bound,
                    params,
                    frames,
                    video.segments[j],
                    frame_stride,
                )?;
                fuse(tape, bound, t, v)?
            }
        };
        contexts.push(repr);
    }

    let (mut state, _r0) = if no_ing {
        init_without_ingredients(tape, bound, params)?
    } else {
        init_from_ingredients(tape, bound, params, &prep.ing_vec)?
    };

    let mut ld_total: Option<Var> = None;
    let mut lr_total: Option<Var> = None;
    for j in 0..n {
        let prediction = state.h; // r̂_{j+1}
        let nll = teacher_forced_nll(tape, bound, params, prediction, &prep.targets[j])?;
        ld_total = Some(match ld_total {
            None => nll,
            Some(acc) => tape.add(acc, nll)?,
        });
        if use_recipe_loss {
            let diff = tape.sub(contexts[j], prediction)?;
            let sq = tape.mul(diff, diff)?;
            let ssq = tape.sum(sq);
            lr_total = Some(match lr_total {
                None => ssq,
                Some(acc) => tape.add(acc, ssq)?,
            });
        }
        if j + 1 < n {
            let input = if ss_replace.get(j).copied().unwrap_or(false) {
                *ss_replacements += 1;
                prediction
            } else {
                contexts[j]
            };
            state = advance(tape, bound, &state, input)?;
        }
    }

    let ld = ld_total.expect("recipes have at least one step");
    let lr = lr_total.unwrap_or_else(|| tape.constant(Tensor::scalar(F::zero())));
    let total = if use_recipe_loss {
        let scaled = tape.scale(lr, F::from_wide(cfg_alpha));
        tape.add(ld, scaled)?
    } else {
        ld
    };
    Ok(RecipeLoss {
        ld,
        lr,
        total,
        ld_value: tape.value(ld).item().wide(),
        lr_value: tape.value(lr).item().wide(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_ld: f64,
    pub mean_lr: f64,
    pub wall_secs: f64,
    pub grad_norm_mean: f64,
    pub grad_norm_max: f64,
    pub val_ld: Option<f64>,
    pub ss_replacements: u64,
    pub recipes_used: usize,
    pub recipes_skipped: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

pub struct Trainer {
    pub params: ModelParams<f32>,
    pub cfg: TrainConfig,
    pub log: TrainLog,
    adam: AdamState<f32>,
    shuffle_rng: ChaCha8Rng,
    ss_rng: ChaCha8Rng,
    epoch: usize,
    train: Vec<PreparedRecipe>,
    val: Vec<PreparedRecipe>,
    best: Option<(f64, ModelParams<f32>)>,
}

impl Trainer {
    pub fn new(
        params: ModelParams<f32>,
        train: Vec<PreparedRecipe>,
        val: Vec<PreparedRecipe>,
        cfg: TrainConfig,
    ) -> Trainer {
        let trainable: Vec<&crate::autodiff::Param<f32>> = params
            .params()
            .into_iter()
            .filter(|p| crate::model::trainable_in(&p.name, cfg.stage))
            .collect();
        let adam = AdamState::new(&trainable, AdamHyper::with_lr(cfg.lr));
        // Independent seeded streams: one for shuffling, one for the
        // scheduled-sampling draws.
        let shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut ss_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        ss_rng.set_stream(1);
        Trainer {
            params,
            cfg,
            log: TrainLog::default(),
            adam,
            shuffle_rng,
            ss_rng,
            epoch: 0,
            train,
            val,
            best: None,
        }
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    /// Mean per-recipe decoder loss under teacher forcing (no sampling),
    /// without touching gradients.
    pub fn evaluate_mean_ld(&self, set: &[PreparedRecipe]) -> Result<Option<f64>> {
        evaluate_mean_ld(&self.params, set, &self.cfg)
    }

    pub fn run_epoch(&mut self) -> Result<&EpochStats> {
        self.epoch += 1;
        let started = Instant::now();
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        // Fisher-Yates with the dedicated shuffle stream.
        for i in (1..order.len()).rev() {
            let j = self.shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }
        let ss_active = self.cfg.scheduled_sampling.enabled
            && self.epoch > self.cfg.scheduled_sampling.start_epoch;

        let mut sum_ld = 0.0;
        let mut sum_lr = 0.0;
        let mut used = 0usize;
        let mut skipped = 0usize;
        let mut ss_replacements = 0u64;
        let mut norms: Vec<f64> = Vec::new();

        for (batch_idx, batch) in order.chunks(self.cfg.batch_size.max(1)).enumerate() {
            self.params.zero_grads();
            let mut in_batch = 0usize;
            for &ri in batch {
                let prep = &self.train[ri];
                if let Some(reason) = unusable_reason(prep, self.cfg.stage, self.cfg.no_ing) {
                    warn!("skipping recipe {}: {reason}", prep.id);
                    skipped += 1;
                    continue;
                }
                let n = prep.step_ids.len();
                let ss_replace: Vec<bool> = (0..n.saturating_sub(1))
                    .map(|_| ss_active && self.ss_rng.random_bool(self.cfg.scheduled_sampling.prob))
                    .collect();
                let mut tape = Tape::new();
                let bound = self.params.bind(&mut tape, Some(self.cfg.stage));
                let loss = recipe_forward_loss(
                    &mut tape,
                    &bound,
                    &self.params,
                    prep,
                    self.cfg.stage,
                    self.cfg.alpha,
                    self.cfg.use_recipe_loss,
                    self.cfg.frame_stride,
                    self.cfg.no_ing,
                    &ss_replace,
                    &mut ss_replacements,
                )?;
                if !loss.ld_value.is_finite() || !loss.lr_value.is_finite() {
                    return Err(CoreError::NonFiniteLoss {
                        epoch: self.epoch,
                        batch: batch_idx,
                    });
                }
                tape.backward(loss.total)?;
                self.params.accumulate_grads(&tape, &bound);
                sum_ld += loss.ld_value;
                sum_lr += loss.lr_value;
                in_batch += 1;
            }
            if in_batch == 0 {
                continue;
            }
            used += in_batch;
            let inv = 1.0 / in_batch as f64;
            let mut trainable = self.params.trainable_mut(self.cfg.stage);
            for p in trainable.iter_mut() {
                for g in p.grad.data_mut() {
                    *g = (*g as f64 * inv) as f32;
                }
            }
            let norm = adam_step(&mut trainable, &mut self.adam, self.cfg.clip_norm)?;
            norms.push(norm);
        }

        let val_ld = evaluate_mean_ld(&self.params, &self.val, &self.cfg)?;
        if let Some(v) = val_ld {
            if self.best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                self.best = Some((v, self.params.clone()));
            }
        }

        let denom = used.max(1) as f64;
        let stats = EpochStats {
            epoch: self.epoch,
            mean_ld: sum_ld / denom,
            mean_lr: sum_lr / denom,
            wall_secs: started.elapsed().as_secs_f64(),
            grad_norm_mean: if norms.is_empty() {
                0.0
            } else {
                norms.iter().sum::<f64>() / norms.len() as f64
            },
            grad_norm_max: norms.iter().cloned().fold(0.0, f64::max),
            val_ld,
            ss_replacements,
            recipes_used: used,
            recipes_skipped: skipped,
        };
        self.log.epochs.push(stats);
        Ok(self.log.epochs.last().expect("just pushed"))
    }

    pub fn run(&mut self, epochs: usize) -> Result<()> {
        for _ in 0..epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    /// Best-validation parameters when a validation set exists, otherwise the
    /// final parameters.
    pub fn finish(self) -> (ModelParams<f32>, TrainLog, AdamState<f32>) {
        let params = match self.best {
            Some((_, best)) => best,
            None => self.params,
        };
        (params, self.log, self.adam)
    }
}

/// Teacher-forced mean L_d of `set` (no scheduled sampling, no gradients).
pub fn evaluate_mean_ld(
    params: &ModelParams<f32>,
    set: &[PreparedRecipe],
    cfg: &TrainConfig,
) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut sink = 0u64;
    for prep in set {
        if unusable_reason(prep, cfg.stage, cfg.no_ing).is_some() {
            continue;
        }
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, None);
        let loss = recipe_forward_loss(
            &mut tape,
            &bound,
            params,
            prep,
            cfg.stage,
            cfg.alpha,
            cfg.use_recipe_loss,
            cfg.frame_stride,
            cfg.no_ing,
            &[],
            &mut sink,
        )?;
        sum += loss.ld_value;
        count += 1;
    }
    Ok((count > 0).then(|| sum / count as f64))
}

/// Stage 1: jointly train SE, RE and SD (plus embedding and the ingredient
/// projection) from a fresh initialization.
pub fn train_text(
    model_config: crate::model::ModelConfig,
    train: Vec<PreparedRecipe>,
    val: Vec<PreparedRecipe>,
    cfg: TrainConfig,
) -> Result<(ModelParams<f32>, TrainLog, AdamState<f32>)> {
    if cfg.stage != Stage::Text {
        return Err(CoreError::invalid("train_text requires stage = text"));
    }
    let params = ModelParams::init(model_config, cfg.seed);
    let mut trainer = Trainer::new(params, train, val, cfg.clone());
    trainer.run(cfg.epochs)?;
    Ok(trainer.finish())
}

/// Stage 2: train VE (and the fusion projection in the video-text stage) on
/// top of a pretrained text checkpoint; all text parameters stay fixed.
pub fn train_video(
    pretrained: ModelParams<f32>,
    train: Vec<PreparedRecipe>,
    val: Vec<PreparedRecipe>,
    cfg: TrainConfig,
) -> Result<(ModelParams<f32>, TrainLog, AdamState<f32>)> {
    if !matches!(cfg.stage, Stage::Video | Stage::VideoText) {
        return Err(CoreError::invalid(
            "train_video requires stage = video or video_text",
        ));
    }
    let mut trainer = Trainer::new(pretrained, train, val, cfg.clone());
    trainer.run(cfg.epochs)?;
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny_prep(steps: &[&[usize]], ing: Vec<f32>) -> PreparedRecipe {
        PreparedRecipe {
            id: "t".into(),
            step_ids: steps.iter().map(|s| s.to_vec()).collect(),
            targets: steps
                .iter()
                .map(|s| {
                    let mut t = s.to_vec();
                    t.push(EOS);
                    t
                })
                .collect(),
            ing_vec: ing,
            has_ingredients: true,
            video: None,
        }
    }

    fn tiny_params(seed: u64) -> ModelParams<f64> {
        ModelParams::init(
            ModelConfig {
                vocab_size: 12,
                ingredient_count: 3,
                embed_dim: 4,
                enc_hidden: 3,
                feature_dim: 2,
            },
            seed,
        )
    }

    fn loss_of(
        params: &ModelParams<f64>,
        prep: &PreparedRecipe,
        alpha: f64,
        use_lr: bool,
    ) -> RecipeLoss {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, None);
        let mut sink = 0u64;
        recipe_forward_loss(
            &mut tape,
            &bound,
            params,
            prep,
            Stage::Text,
            alpha,
            use_lr,
            5,
            false,
            &[],
            &mut sink,
        )
        .unwrap()
    }

    #[test]
    fn one_step_recipe_has_single_pair_recipe_loss() {
        let params = tiny_params(3);
        let prep = tiny_prep(&[&[4, 5, 6]], vec![1.0, 0.0, 1.0]);
        let loss = loss_of(&params, &prep, 0.1, true);
        assert!(loss.lr_value > 0.0);
        assert!(loss.ld_value > 0.0);

        // Recompute the single (r_1 - r̂_1) pair externally.
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, None);
        let r1 = crate::encoders::encode_sentence(&mut tape, &bound, &params, &[4, 5, 6]).unwrap();
        let (state, _) =
            crate::recipe_net::init_from_ingredients(&mut tape, &bound, &params, &prep.ing_vec)
                .unwrap();
        let expect: f64 = tape
            .value(r1)
            .data()
            .iter()
            .zip(tape.value(state.h).data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!((loss.lr_value - expect).abs() < 1e-9);
    }

    #[test]
    fn alpha_zero_total_equals_ld_exactly() {
        let params = tiny_params(5);
        let prep = tiny_prep(&[&[4, 5], &[6, 7, 8]], vec![0.0, 1.0, 0.0]);
        let loss = loss_of(&params, &prep, 0.0, true);
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, None);
        let mut sink = 0u64;
        let total_val = {
            let l = recipe_forward_loss(
                &mut tape, &bound, &params, &prep, Stage::Text, 0.0, true, 5, false, &[], &mut sink,
            )
            .unwrap();
            tape.value(l.total).item()
        };
        assert_eq!(total_val, loss.ld_value);
    }

    #[test]
    fn alpha_scales_recipe_loss_linearly() {
        let params = tiny_params(6);
        let prep = tiny_prep(&[&[4, 5], &[6, 7, 8], &[9]], vec![1.0, 1.0, 0.0]);
        let l1 = loss_of(&params, &prep, 0.1, true);
        let l2 = loss_of(&params, &prep, 0.2, true);
        let t1 = l1.ld_value + 0.1 * l1.lr_value;
        let t2 = l2.ld_value + 0.2 * l2.lr_value;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, None);
        let mut sink = 0u64;
        let got1 = recipe_forward_loss(
            &mut tape, &bound, &params, &prep, Stage::Text, 0.1, true, 5, false, &[], &mut sink,
        )
        .unwrap();
        assert!((tape.value(got1.total).item() - t1).abs() < 1e-9);
        assert!(((t2 - t1) - 0.1 * l1.lr_value).abs() < 1e-9);
    }

    #[test]
    fn default_epoch_table() {
        assert_eq!(default_epochs(Stage::Text, false), 50);
        assert_eq!(default_epochs(Stage::Text, true), 10);
        assert_eq!(default_epochs(Stage::Video, false), 25);
        assert_eq!(default_epochs(Stage::VideoText, false), 25);
    }

    #[test]
    fn recipes_without_ingredients_need_no_ing_mode() {
        let mut prep = tiny_prep(&[&[4]], vec![0.0; 3]);
        prep.has_ingredients = false;
        assert!(unusable_reason(&prep, Stage::Text, false).is_some());
        assert!(unusable_reason(&prep, Stage::Text, true).is_none());
        // Video stages need a manifest with matching segment count.
        assert!(unusable_reason(&prep, Stage::Video, true).is_some());
        prep.video = Some(PreparedVideo {
            frames: Tensor::zeros(&[4, 2]),
            segments: vec![(0, 4)],
        });
        assert!(unusable_reason(&prep, Stage::Video, true).is_none());
        prep.video.as_mut().unwrap().segments.push((4, 4));
        assert!(unusable_reason(&prep, Stage::Video, true).is_some());
    }
}
