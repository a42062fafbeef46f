//! The recipe RNN: an LSTM over step representations whose hidden state at
//! step j is itself the prediction of step j+1's representation.

use crate::autodiff::{lstm_cell, Scalar, Tape, Tensor, Var};
use crate::error::Result;
use crate::model::{BoundModel, ModelParams};

/// State of the recipe RNN. `h` is, by definition, the prediction
/// r̂_{step_index + 1}.
#[derive(Clone, Copy, Debug)]
pub struct RecipeState {
    pub h: Var,
    pub c: Var,
    pub step_index: usize,
}

fn zero_state<F: Scalar>(tape: &mut Tape<F>, dim: usize) -> (Var, Var) {
    let h = tape.constant(Tensor::zeros(&[dim]));
    let c = tape.constant(Tensor::zeros(&[dim]));
    (h, c)
}

/// Project the multi-hot ingredient vector to r0 and advance the RNN once
/// from the zero state; the resulting hidden state is r̂_1.
pub fn init_from_ingredients<F: Scalar>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    params: &ModelParams<F>,
    ingredient_vec: &[f32],
) -> Result<(RecipeState, Var)> {
    let expected = params.config.ingredient_count;
    if ingredient_vec.len() != expected {
        return Err(crate::error::CoreError::ShapeMismatch {
            op: "init_from_ingredients",
            lhs: vec![ingredient_vec.len()],
            rhs: vec![expected],
        });
    }
    let ing = tape.constant(Tensor::vector(
        ingredient_vec.iter().map(|&x| F::from_wide(x as f64)).collect(),
    ));
    let projected = tape.matvec(bound.ing.w, ing)?;
    let r0 = tape.add(projected, bound.ing.b)?;
    let state = start_with(tape, bound, params, r0)?;
    Ok((state, r0))
}

/// noING variant: the learned constant start vector replaces f(I).
pub fn init_without_ingredients<F: Scalar>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    params: &ModelParams<F>,
) -> Result<(RecipeState, Var)> {
    let r0 = bound.no_ing_start;
    let state = start_with(tape, bound, params, r0)?;
    Ok((state, r0))
}

fn start_with<F: Scalar>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    params: &ModelParams<F>,
    r0: Var,
) -> Result<RecipeState> {
    let dim = params.config.repr_dim();
    let (h0, c0) = zero_state(tape, dim);
    let (h, c) = lstm_cell(tape, r0, h0, c0, &bound.re)?;
    Ok(RecipeState {
        h,
        c,
        step_index: 0,
    })
}

/// One recurrence step. The input may be a ground-truth encoding, a video
/// encoding, or a previous prediction (closed loop).
pub fn advance<F: Scalar>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    state: &RecipeState,
    repr: Var,
) -> Result<RecipeState> {
    let (h, c) = lstm_cell(tape, repr, state.h, state.c, &bound.re)?;
    Ok(RecipeState {
        h,
        c,
        step_index: state.step_index + 1,
    })
}
