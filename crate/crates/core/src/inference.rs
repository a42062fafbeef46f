//! Zero-shot anticipation: choose the observed context (ground-truth text,
//! ground-truth video segments, fixed windows, or external proposals), roll
//! the recipe RNN over it, then feed predictions back as inputs to decode
//! sentences for several future horizons.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::corpus::{tokenize, IngredientVocabulary, Recipe, Vocabulary, VideoManifest};
use crate::decoder::{decode_beam, decode_greedy};
use crate::encoders::{sentence_repr, video_repr, StepRepr};
use crate::error::{CoreError, Result};
use crate::features;
use crate::model::ModelParams;
use crate::recipe_net::{advance, init_from_ingredients, init_without_ingredients, RecipeState};

/// IoU threshold for proposal non-maximum suppression.
pub const PROPOSAL_IOU_THRESHOLD: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SegmentationStrategy {
    GroundTruth,
    FixedWindow { width: usize },
    ExternalProposals { proposals: Vec<(usize, usize)> },
}

/// What the model observes as context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ContextSource {
    /// Ground-truth step sentences through the sentence encoder.
    TextGt,
    /// Video segments through the video encoder.
    Video(SegmentationStrategy),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMethod {
    Greedy,
    Beam5,
}

#[derive(Clone, Copy, Debug)]
pub struct AnticipateOptions {
    pub horizons: usize,
    pub decode: DecodeMethod,
    pub max_len: usize,
    pub frame_stride: usize,
    pub no_ing: bool,
}

impl Default for AnticipateOptions {
    fn default() -> Self {
        AnticipateOptions {
            horizons: 4,
            decode: DecodeMethod::Greedy,
            max_len: 30,
            frame_stride: crate::encoders::FRAME_STRIDE,
            no_ing: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HorizonPrediction {
    pub horizon: usize,
    pub token_ids: Vec<usize>,
    pub text: String,
    pub logprob: f64,
    pub repr_norm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRow {
    /// Number of observed context segments consumed before predicting.
    pub prefix: usize,
    pub predictions: Vec<HorizonPrediction>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictionTrace {
    pub recipe_id: String,
    pub rows: Vec<TraceRow>,
}

fn iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let inter = a.1.min(b.1).saturating_sub(a.0.max(b.0));
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Proposal normalization: iterative longest-first NMS at the IoU threshold,
/// then proportional splitting of any remaining overlaps so the survivors
/// are sorted and disjoint.
pub fn normalize_proposals(proposals: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut pool: Vec<(usize, usize)> = proposals
        .iter()
        .copied()
        .filter(|&(s, e)| s < e)
        .collect();
    let mut kept = Vec::new();
    while !pool.is_empty() {
        // Longest proposal first; ties broken by earlier start.
        let best = pool
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                (a.1 - a.0)
                    .cmp(&(b.1 - b.0))
                    .then_with(|| b.0.cmp(&a.0))
            })
            .map(|(i, _)| i)
            .expect("pool non-empty");
        let chosen = pool.swap_remove(best);
        pool.retain(|&p| iou(chosen, p) < PROPOSAL_IOU_THRESHOLD);
        kept.push(chosen);
    }
    kept.sort_unstable();
    // Split leftover overlaps proportionally to the segment lengths: the
    // longer segment keeps the larger share of the disputed region.
    for i in 1..kept.len() {
        let (a, b) = (kept[i - 1], kept[i]);
        if b.0 < a.1 {
            let overlap = a.1.min(b.1) - b.0;
            let (la, lb) = (a.1 - a.0, b.1 - b.0);
            let share = (overlap as f64 * la as f64 / (la + lb) as f64).round() as usize;
            let boundary = b.0 + share.min(overlap);
            kept[i - 1].1 = boundary;
            kept[i].0 = boundary;
        }
    }
    kept.retain(|&(s, e)| s < e);
    kept
}

/// Partition the observed part of a video into step-sized segments.
pub fn segment_video(
    manifest: &VideoManifest,
    strategy: &SegmentationStrategy,
    observed_until: usize,
) -> Result<Vec<(usize, usize)>> {
    if observed_until > manifest.num_frames {
        return Err(CoreError::invalid(format!(
            "observed_until {observed_until} exceeds {} frames",
            manifest.num_frames
        )));
    }
    let segments = match strategy {
        SegmentationStrategy::GroundTruth => manifest
            .segments
            .iter()
            .copied()
            .filter(|&(_, e)| e <= observed_until)
            .collect(),
        SegmentationStrategy::FixedWindow { width } => {
            if *width == 0 {
                return Err(CoreError::invalid("window width must be at least 1"));
            }
            let mut out = Vec::new();
            let mut start = 0usize;
            while start < observed_until {
                let end = (start + width).min(observed_until);
                out.push((start, end));
                start = end;
            }
            out
        }
        SegmentationStrategy::ExternalProposals { proposals } => {
            let mut out = Vec::new();
            for &(s, e) in &normalize_proposals(proposals) {
                if s >= observed_until {
                    continue;
                }
                out.push((s, e.min(observed_until)));
            }
            out
        }
    };
    Ok(segments)
}

/// Proposals file: a JSON object mapping recipe id to a list of
/// `[start_frame, end_frame]` pairs.
pub fn load_proposals(path: &Path) -> Result<BTreeMap<String, Vec<(usize, usize)>>> {
    let text = fs::read_to_string(path).map_err(|source| CoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CoreError::BadFile {
        path: path.to_path_buf(),
        message: format!("bad proposals file: {e}"),
    })
}

/// Encode the recipe's observable context under the chosen strategy.
pub fn encode_contexts(
    recipe: &Recipe,
    params: &ModelParams<f32>,
    vocab: &Vocabulary,
    source: &ContextSource,
    frame_stride: usize,
) -> Result<Vec<StepRepr<f32>>> {
    match source {
        ContextSource::TextGt => recipe
            .steps
            .iter()
            .map(|s| sentence_repr(params, &vocab.encode(&tokenize(s))))
            .collect(),
        ContextSource::Video(strategy) => {
            let manifest = recipe.video.as_ref().ok_or_else(|| {
                CoreError::invalid(format!("recipe {} has no video manifest", recipe.id))
            })?;
            let frames = features::load_features(manifest)?;
            let segments = segment_video(manifest, strategy, manifest.num_frames)?;
            segments
                .iter()
                .map(|&seg| video_repr(params, &frames, seg, frame_stride))
                .collect()
        }
    }
}

/// Predict future steps for every observed prefix length. Row `j` consumes
/// the first `j` context encodings; its horizon-h prediction aligns to
/// ground-truth step `j + h`.
pub fn anticipate(
    recipe: &Recipe,
    params: &ModelParams<f32>,
    vocab: &Vocabulary,
    iv: &IngredientVocabulary,
    source: &ContextSource,
    opts: &AnticipateOptions,
) -> Result<PredictionTrace> {
    let contexts = encode_contexts(recipe, params, vocab, source, opts.frame_stride)?;
    let (ing_vec, _) = crate::corpus::encode_ingredients(recipe, iv);
    let n_steps = recipe.steps.len();
    let max_prefix = contexts.len().min(n_steps.saturating_sub(1));

    let mut rows = Vec::with_capacity(max_prefix + 1);
    for prefix in 0..=max_prefix {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, None);
        let (mut state, _r0): (RecipeState, _) = if opts.no_ing {
            init_without_ingredients(&mut tape, &bound, params)?
        } else {
            init_from_ingredients(&mut tape, &bound, params, &ing_vec)?
        };
        for ctx in contexts.iter().take(prefix) {
            let v = tape.constant(ctx.vector.clone());
            state = advance(&mut tape, &bound, &state, v)?;
        }
        // Closed loop: decode the current prediction, then feed it back.
        let mut predictions = Vec::with_capacity(opts.horizons);
        for h in 1..=opts.horizons {
            let repr: Tensor<f32> = tape.value(state.h).clone();
            let repr_norm = repr.sq_norm_f64().sqrt();
            let (token_ids, logprob) = match opts.decode {
                DecodeMethod::Greedy => {
                    let d = decode_greedy(params, &repr, opts.max_len)?;
                    (d.tokens, d.logprob)
                }
                DecodeMethod::Beam5 => {
                    let hyp = decode_beam(params, &repr, 5, opts.max_len)?;
                    (hyp.content_tokens().to_vec(), hyp.logprob)
                }
            };
            let text = vocab.decode(&token_ids).join(" ");
            predictions.push(HorizonPrediction {
                horizon: h,
                token_ids,
                text,
                logprob,
                repr_norm,
            });
            if h < opts.horizons {
                let fed = state.h;
                state = advance(&mut tape, &bound, &state, fed)?;
            }
        }
        rows.push(TraceRow {
            prefix,
            predictions,
        });
    }
    Ok(PredictionTrace {
        recipe_id: recipe.id.clone(),
        rows,
    })
}

pub fn write_traces(path: &Path, traces: &[PredictionTrace]) -> Result<()> {
    let mut out = String::new();
    for t in traces {
        out.push_str(&serde_json::to_string(t).expect("trace serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| CoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_traces(path: &Path) -> Result<Vec<PredictionTrace>> {
    let text = fs::read_to_string(path).map_err(|source| CoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CoreError::MalformedLine {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
