//! Sentence decoder: an LSTM language model conditioned on a step
//! representation, with teacher-forced scoring plus greedy and beam decoding.
//! The representation is concatenated to the word embedding at every step.

use crate::autodiff::{lstm_cell, Scalar, Tape, Tensor, Var};
use crate::corpus::{BOS, EOS, PAD, UNK};
use crate::error::{CoreError, Result};
use crate::model::{BoundModel, ModelParams};

/// Result of greedy decoding: content tokens (EOS excluded) and the total
/// log-probability of the emitted sequence including its terminator.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub tokens: Vec<usize>,
    pub logprob: f64,
}

/// A beam-search hypothesis. `tokens` ends with EOS iff the hypothesis
/// finished before the length limit.
#[derive(Clone, Debug)]
pub struct Hypothesis<F> {
    pub tokens: Vec<usize>,
    pub logprob: f64,
    pub state: (Tensor<F>, Tensor<F>),
}

impl<F: Scalar> Hypothesis<F> {
    pub fn finished(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }

    /// Tokens with the trailing EOS stripped.
    pub fn content_tokens(&self) -> &[usize] {
        match self.tokens.split_last() {
            Some((&EOS, rest)) => rest,
            _ => &self.tokens,
        }
    }
}

/// Teacher-forced negative log-likelihood of `target` given representation
/// `r`, summed over tokens. The caller appends EOS to the sentence if the
/// terminator is to be scored.
pub fn teacher_forced_nll<F: Scalar>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    params: &ModelParams<F>,
    r: Var,
    target: &[usize],
) -> Result<Var> {
    let mut end = target.len();
    while end > 0 && target[end - 1] == PAD {
        end -= 1;
    }
    let target = &target[..end];
    if target.is_empty() {
        return Err(CoreError::invalid("teacher_forced_nll: empty target"));
    }
    if target.contains(&PAD) {
        return Err(CoreError::invalid(
            "teacher_forced_nll: PAD inside the target sequence",
        ));
    }
    let hidden = params.config.dec_hidden();
    let mut h = tape.constant(Tensor::zeros(&[hidden]));
    let mut c = tape.constant(Tensor::zeros(&[hidden]));
    let mut prev = BOS;
    let mut total: Option<Var> = None;
    for &tok in target {
        let emb = tape.row(bound.embedding, prev)?;
        let inp = tape.concat(&[emb, r])?;
        let (nh, nc) = lstm_cell(tape, inp, h, c, &bound.sd)?;
        h = nh;
        c = nc;
        let logits_raw = tape.matvec(bound.out.w, h)?;
        let logits = tape.add(logits_raw, bound.out.b)?;
        let lp = tape.log_softmax(logits)?;
        let term = tape.pick(lp, tok)?;
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
        prev = tok;
    }
    Ok(tape.scale(total.expect("non-empty target"), -F::one()))
}

/// One value-level decode step: log-probabilities over the vocabulary (UNK
/// masked out) and the next LSTM state.
fn decode_step<F: Scalar>(
    params: &ModelParams<F>,
    r: &Tensor<F>,
    prev: usize,
    state: Option<&(Tensor<F>, Tensor<F>)>,
) -> Result<(Vec<f64>, (Tensor<F>, Tensor<F>))> {
    let hidden = params.config.dec_hidden();
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, None);
    let (h0, c0) = match state {
        Some((h, c)) => (tape.constant(h.clone()), tape.constant(c.clone())),
        None => (
            tape.constant(Tensor::zeros(&[hidden])),
            tape.constant(Tensor::zeros(&[hidden])),
        ),
    };
    let emb = tape.row(bound.embedding, prev)?;
    let rv = tape.constant(r.clone());
    let inp = tape.concat(&[emb, rv])?;
    let (h, c) = lstm_cell(&mut tape, inp, h0, c0, &bound.sd)?;
    let logits_raw = tape.matvec(bound.out.w, h)?;
    let logits = tape.add(logits_raw, bound.out.b)?;

    // Mask UNK, then log-softmax over the remaining mass.
    let mut xs: Vec<f64> = tape.value(logits).data().iter().map(|x| x.wide()).collect();
    xs[UNK] = f64::NEG_INFINITY;
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    let log_denom = denom.ln();
    let lps: Vec<f64> = xs.iter().map(|x| x - max - log_denom).collect();
    Ok((lps, (tape.value(h).clone(), tape.value(c).clone())))
}

fn argmax_first(lps: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in lps.iter().enumerate() {
        if v > lps[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding: emit the argmax token at every step, stopping at EOS or
/// after `max_len` content tokens.
pub fn decode_greedy<F: Scalar>(
    params: &ModelParams<F>,
    r: &Tensor<F>,
    max_len: usize,
) -> Result<Decoded> {
    let mut tokens = Vec::new();
    let mut logprob = 0.0;
    let mut prev = BOS;
    let mut state: Option<(Tensor<F>, Tensor<F>)> = None;
    for _ in 0..max_len {
        let (lps, next_state) = decode_step(params, r, prev, state.as_ref())?;
        let tok = argmax_first(&lps);
        logprob += lps[tok];
        state = Some(next_state);
        if tok == EOS {
            return Ok(Decoded { tokens, logprob });
        }
        tokens.push(tok);
        prev = tok;
    }
    Ok(Decoded { tokens, logprob })
}

/// Beam search over raw (length-unnormalized) log-probabilities. Finished
/// hypotheses are retired and the best retired hypothesis is returned;
/// hypotheses hitting `max_len` retire unfinished.
pub fn decode_beam<F: Scalar>(
    params: &ModelParams<F>,
    r: &Tensor<F>,
    k: usize,
    max_len: usize,
) -> Result<Hypothesis<F>> {
    if k == 0 {
        return Err(CoreError::invalid("beam width must be at least 1"));
    }
    let hidden = params.config.dec_hidden();
    let zero = (Tensor::zeros(&[hidden]), Tensor::zeros(&[hidden]));
    let mut active = vec![Hypothesis::<F> {
        tokens: vec![],
        logprob: 0.0,
        state: zero,
    }];
    let mut retired: Vec<Hypothesis<F>> = Vec::new();

    for _ in 0..max_len {
        if active.is_empty() {
            break;
        }
        if let Some(best_done) = retired
            .iter()
            .map(|h| h.logprob)
            .max_by(f64::total_cmp)
        {
            let best_active = active
                .iter()
                .map(|h| h.logprob)
                .max_by(f64::total_cmp)
                .unwrap();
            // Extensions only lower the score, so nothing active can win.
            if best_active <= best_done {
                break;
            }
        }
        // (score, token, parent) candidates over every active hypothesis.
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        let mut states = Vec::with_capacity(active.len());
        for (pi, hyp) in active.iter().enumerate() {
            let prev = *hyp.tokens.last().unwrap_or(&BOS);
            let (lps, next_state) = decode_step(params, r, prev, Some(&hyp.state))?;
            for (tok, &lp) in lps.iter().enumerate() {
                if lp > f64::NEG_INFINITY {
                    candidates.push((hyp.logprob + lp, tok, pi));
                }
            }
            states.push(next_state);
        }
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.2.cmp(&b.2))
        });
        let mut next_active = Vec::with_capacity(k);
        for &(score, tok, pi) in candidates.iter().take(k) {
            let mut tokens = active[pi].tokens.clone();
            tokens.push(tok);
            let hyp = Hypothesis {
                tokens,
                logprob: score,
                state: states[pi].clone(),
            };
            if tok == EOS {
                retired.push(hyp);
            } else {
                next_active.push(hyp);
            }
        }
        active = next_active;
    }
    // Anything still active has hit the length limit.
    retired.extend(active);
    retired
        .into_iter()
        .max_by(|a, b| a.logprob.total_cmp(&b.logprob))
        .ok_or_else(|| CoreError::invalid("beam search produced no hypotheses"))
}
