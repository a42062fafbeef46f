//! Fixed-length step representations from text (SE) or video features (VE).
//! Both encoders are bi-directional LSTMs whose per-timestep output
//! concatenations are max-pooled over time, so their outputs are
//! interchangeable inputs to the recipe RNN.

use log::warn;

use crate::autodiff::{lstm_cell, LstmVars, Scalar, Tape, Tensor, Var};
use crate::error::{CoreError, Result};
use crate::model::{BoundModel, ModelParams};

/// Sentences longer than this are truncated before encoding.
pub const MAX_SENTENCE_TOKENS: usize = 60;

/// Default frame subsampling stride inside a segment.
pub const FRAME_STRIDE: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReprSource {
    Text,
    Video,
    Fused,
    Predicted,
    IngredientInit,
}

/// A step representation detached from any tape, as used at inference time.
#[derive(Clone, Debug)]
pub struct StepRepr<F> {
    pub vector: Tensor<F>,
    pub source: ReprSource,
}

impl<F: Scalar> StepRepr<F> {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn norm(&self) -> f64 {
        self.vector.sq_norm_f64().sqrt()
    }
}

/// Run one direction of an LSTM over `inputs`, returning the hidden state at
/// every timestep.
fn run_lstm<F: Scalar>(
    tape: &mut Tape<F>,
    params: &LstmVars,
    inputs: &[Var],
    hidden: usize,
    reverse: bool,
) -> Result<Vec<Var>> {
    let mut h = tape.constant(Tensor::zeros(&[hidden]));
    let mut c = tape.constant(Tensor::zeros(&[hidden]));
    let mut states = Vec::with_capacity(inputs.len());
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        let (nh, nc) = lstm_cell(tape, inputs[t], h, c, params)?;
        h = nh;
        c = nc;
        states.push(h);
    }
    if reverse {
        states.reverse();
    }
    Ok(states)
}

/// Bi-LSTM over `inputs` followed by dimension-independent max pooling over
/// time. Returns the pooled representation plus the per-timestep
/// concatenated states.
fn bi_lstm_pool<F: Scalar>(
    tape: &mut Tape<F>,
    fwd: &LstmVars,
    bwd: &LstmVars,
    inputs: &[Var],
    hidden: usize,
) -> Result<(Var, Vec<Var>)> {
    let f_states = run_lstm(tape, fwd, inputs, hidden, false)?;
    let b_states = run_lstm(tape, bwd, inputs, hidden, true)?;
    let mut ys = Vec::with_capacity(inputs.len());
    for (f, b) in f_states.iter().zip(&b_states) {
        ys.push(tape.concat(&[*f, *b])?);
    }
    let stacked = tape.stack(&ys)?;
    let pooled = tape.max_over_time(stacked)?;
    Ok((pooled, ys))
}

/// Encode a tokenized sentence, also returning the per-timestep states
/// (used by the pooling-contract checks and the debug dump).
pub fn encode_sentence_states<F: Scalar>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    params: &ModelParams<F>,
    token_ids: &[usize],
) -> Result<(Var, Vec<Var>)> {
    if token_ids.is_empty() {
        return Err(CoreError::invalid(
            "cannot encode an empty sentence; callers must filter empty steps",
        ));
    }
    let ids = if token_ids.len() > MAX_SENTENCE_TOKENS {
        warn!(
            "truncating sentence of {} tokens to {MAX_SENTENCE_TOKENS}",
            token_ids.len()
        );
        &token_ids[..MAX_SENTENCE_TOKENS]
    } else {
        token_ids
    };
    let embedded = tape.embedding_lookup(bound.embedding, ids)?;
    let inputs: Result<Vec<Var>> = (0..ids.len()).map(|t| tape.row(embedded, t)).collect();
    bi_lstm_pool(
        tape,
        &bound.se_fwd,
        &bound.se_bwd,
        &inputs?,
        params.config.enc_hidden,
    )
}

pub fn encode_sentence<F: Scalar>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    params: &ModelParams<F>,
    token_ids: &[usize],
) -> Result<Var> {
    encode_sentence_states(tape, bound, params, token_ids).map(|(r, _)| r)
}

/// Frame indices consumed from a segment of `len` frames: `{0, stride, ...}`
/// relative to the segment start.
pub fn strided_indices(len: usize, stride: usize) -> Vec<usize> {
    (0..len).step_by(stride.max(1)).collect()
}

/// Encode one video segment from the recipe's frame-feature matrix.
pub fn encode_video_segment_states<F: Scalar>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    params: &ModelParams<F>,
    frames: &Tensor<F>,
    segment: (usize, usize),
    stride: usize,
) -> Result<(Var, Vec<Var>)> {
    let (start, end) = segment;
    if start >= end || end > frames.shape()[0] {
        return Err(CoreError::invalid(format!(
            "segment [{start}, {end}) out of range for {} frames",
            frames.shape()[0]
        )));
    }
    let mut picks = strided_indices(end - start, stride);
    if picks.is_empty() {
        // Degenerate stride configuration: fall back to the middle frame.
        picks.push((end - start) / 2);
    }
    let inputs: Vec<Var> = picks
        .iter()
        .map(|&i| tape.constant(Tensor::vector(frames.row(start + i).to_vec())))
        .collect();
    bi_lstm_pool(
        tape,
        &bound.ve_fwd,
        &bound.ve_bwd,
        &inputs,
        params.config.enc_hidden,
    )
}

pub fn encode_video_segment<F: Scalar>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    params: &ModelParams<F>,
    frames: &Tensor<F>,
    segment: (usize, usize),
    stride: usize,
) -> Result<Var> {
    encode_video_segment_states(tape, bound, params, frames, segment, stride).map(|(r, _)| r)
}

/// Linear map of the concatenated text and video representations back to the
/// shared representation width.
pub fn fuse<F: Scalar>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    text: Var,
    video: Var,
) -> Result<Var> {
    let cat = tape.concat(&[text, video])?;
    let projected = tape.matvec(bound.fusion.w, cat)?;
    tape.add(projected, bound.fusion.b)
}

/// Inference helper: encode a sentence against frozen parameters.
pub fn sentence_repr<F: Scalar>(
    params: &ModelParams<F>,
    token_ids: &[usize],
) -> Result<StepRepr<F>> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, None);
    let r = encode_sentence(&mut tape, &bound, params, token_ids)?;
    Ok(StepRepr {
        vector: tape.value(r).clone(),
        source: ReprSource::Text,
    })
}

/// Inference helper: encode a video segment against frozen parameters.
pub fn video_repr<F: Scalar>(
    params: &ModelParams<F>,
    frames: &Tensor<F>,
    segment: (usize, usize),
    stride: usize,
) -> Result<StepRepr<F>> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, None);
    let r = encode_video_segment(&mut tape, &bound, params, frames, segment, stride)?;
    Ok(StepRepr {
        vector: tape.value(r).clone(),
        source: ReprSource::Video,
    })
}

pub fn fused_repr<F: Scalar>(
    params: &ModelParams<F>,
    text: &StepRepr<F>,
    video: &StepRepr<F>,
) -> Result<StepRepr<F>> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, None);
    let t = tape.constant(text.vector.clone());
    let v = tape.constant(video.vector.clone());
    let f = fuse(&mut tape, &bound, t, v)?;
    Ok(StepRepr {
        vector: tape.value(f).clone(),
        source: ReprSource::Fused,
    })
}
