//! Single LSTM step composed from primitive tape ops, so its gradients come
//! from the same backward rules that every other op uses.

use crate::autodiff::tape::{Tape, Var};
use crate::autodiff::tensor::Scalar;
use crate::error::{CoreError, Result};

/// Tape handles for one cell's parameters. Gate layout along the `4h` axis is
/// input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    /// `[4h, input]`
    pub w_ih: Var,
    /// `[4h, h]`
    pub w_hh: Var,
    /// `[4h]`
    pub bias: Var,
}

/// One recurrence step: returns `(h, c)`.
pub fn lstm_cell<F: Scalar>(
    tape: &mut Tape<F>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    p: &LstmVars,
) -> Result<(Var, Var)> {
    let hidden = tape.value(h_prev).len();
    let gates_rows = tape.value(p.w_ih).shape()[0];
    if gates_rows != 4 * hidden {
        return Err(CoreError::ShapeMismatch {
            op: "lstm_cell",
            lhs: tape.value(p.w_ih).shape().to_vec(),
            rhs: vec![4 * hidden],
        });
    }
    let gx = tape.matvec(p.w_ih, x)?;
    let gh = tape.matvec(p.w_hh, h_prev)?;
    let pre = tape.add(gx, gh)?;
    let gates = tape.add(pre, p.bias)?;

    let i_pre = tape.slice(gates, 0, hidden)?;
    let f_pre = tape.slice(gates, hidden, hidden)?;
    let g_pre = tape.slice(gates, 2 * hidden, hidden)?;
    let o_pre = tape.slice(gates, 3 * hidden, hidden)?;

    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let g = tape.tanh(g_pre);
    let o = tape.sigmoid(o_pre);

    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let c_act = tape.tanh(c);
    let h = tape.mul(o, c_act)?;
    Ok((h, c))
}
