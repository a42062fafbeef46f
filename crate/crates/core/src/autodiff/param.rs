use crate::autodiff::tape::{Tape, Var};
use crate::autodiff::tensor::{Scalar, Tensor};

/// A named, persistent model parameter with an accumulated gradient buffer.
#[derive(Clone, Debug)]
pub struct Param<F> {
    pub name: String,
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
}

impl<F: Scalar> Param<F> {
    pub fn new(name: impl Into<String>, value: Tensor<F>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param {
            name: name.into(),
            value,
            grad,
        }
    }

    /// Register this parameter's current value on a tape.
    pub fn bind(&self, tape: &mut Tape<F>, trainable: bool) -> Var {
        tape.leaf(self.value.clone(), trainable)
    }

    /// Pull the tape gradient of `var` into the persistent buffer.
    pub fn accumulate_from(&mut self, tape: &Tape<F>, var: Var) {
        if let Some(g) = tape.grad(var) {
            self.grad.add_assign(g);
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }
}
