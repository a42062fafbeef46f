//! Finite-difference verification of analytic gradients.
//!
//! The checks here evaluate the loss through forward passes only, so they are
//! independent of the backward sweep they validate. Everything runs in `f64`.

use crate::autodiff::tape::{Tape, Var};
use crate::autodiff::tensor::Tensor;
use crate::error::Result;

/// Builds a scalar loss from leaf variables.
pub type LossFn<'a> = &'a dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

fn eval(inputs: &[Tensor<f64>], build: LossFn) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone(), false))
        .collect();
    let loss = build(&mut tape, &vars)?;
    Ok(tape.value(loss).item())
}

fn analytic_grads(inputs: &[Tensor<f64>], build: LossFn) -> Result<Vec<Tensor<f64>>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    Ok(vars
        .iter()
        .map(|&v| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
        })
        .collect())
}

fn central_difference(
    inputs: &[Tensor<f64>],
    input_idx: usize,
    elem_idx: usize,
    h: f64,
    build: LossFn,
) -> Result<f64> {
    let mut plus = inputs.to_vec();
    plus[input_idx].data_mut()[elem_idx] += h;
    let mut minus = inputs.to_vec();
    minus[input_idx].data_mut()[elem_idx] -= h;
    Ok((eval(&plus, build)? - eval(&minus, build)?) / (2.0 * h))
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / 1.0f64.max(a.abs()).max(n.abs())
}

/// Check every element of every input; returns the maximum relative error.
pub fn max_grad_error(inputs: &[Tensor<f64>], h: f64, build: LossFn) -> Result<f64> {
    let grads = analytic_grads(inputs, build)?;
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let numeric = central_difference(inputs, i, j, h, build)?;
            worst = worst.max(rel_err(grads[i].data()[j], numeric));
        }
    }
    Ok(worst)
}

/// Check only the listed `(input, element)` coordinates.
pub fn max_grad_error_at(
    inputs: &[Tensor<f64>],
    picks: &[(usize, usize)],
    h: f64,
    build: LossFn,
) -> Result<f64> {
    let grads = analytic_grads(inputs, build)?;
    let mut worst = 0.0f64;
    for &(i, j) in picks {
        let numeric = central_difference(inputs, i, j, h, build)?;
        worst = worst.max(rel_err(grads[i].data()[j], numeric));
    }
    Ok(worst)
}
