//! Adam with bias correction, preceded by global gradient-norm clipping.

use serde::{Deserialize, Serialize};

use crate::autodiff::param::Param;
use crate::autodiff::tensor::{Scalar, Tensor};
use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moments aligned index-for-index with the parameter list the
/// state was created from. Frozen parameters get no state at all.
#[derive(Clone, Debug)]
pub struct AdamState<F> {
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &[&Param<F>], hyper: AdamHyper) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            t: 0,
            hyper,
        }
    }
}

/// Global L2 norm over all gradient buffers, accumulated in f64.
pub fn global_grad_norm<F: Scalar>(params: &[&mut Param<F>]) -> f64 {
    params
        .iter()
        .map(|p| p.grad.sq_norm_f64())
        .sum::<f64>()
        .sqrt()
}

/// One optimizer step over `params` using their accumulated gradients.
/// Gradients are clipped to `clip_norm` (global norm) before the update.
/// Gradient buffers are left untouched; the caller zeroes them.
pub fn adam_step<F: Scalar>(
    params: &mut [&mut Param<F>],
    state: &mut AdamState<F>,
    clip_norm: f64,
) -> Result<f64> {
    assert_eq!(params.len(), state.m.len(), "state/param list mismatch");
    for p in params.iter() {
        if !p.grad.all_finite() {
            return Err(CoreError::NonFiniteGradient {
                name: p.name.clone(),
            });
        }
    }
    let norm = params
        .iter()
        .map(|p| p.grad.sq_norm_f64())
        .sum::<f64>()
        .sqrt();
    let scale = if clip_norm > 0.0 && norm > clip_norm {
        clip_norm / norm
    } else {
        1.0
    };

    state.t += 1;
    let h = state.hyper;
    let bc1 = 1.0 - h.beta1.powi(state.t as i32);
    let bc2 = 1.0 - h.beta2.powi(state.t as i32);

    for (i, p) in params.iter_mut().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let val = p.value.data_mut();
        for j in 0..val.len() {
            let g = p.grad.data()[j].wide() * scale;
            let mj = h.beta1 * m[j].wide() + (1.0 - h.beta1) * g;
            let vj = h.beta2 * v[j].wide() + (1.0 - h.beta2) * g * g;
            m[j] = F::from_wide(mj);
            v[j] = F::from_wide(vj);
            let update = h.lr * (mj / bc1) / ((vj / bc2).sqrt() + h.eps);
            val[j] = F::from_wide(val[j].wide() - update);
        }
    }
    Ok(norm)
}
