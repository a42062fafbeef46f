//! Reverse-mode autodiff: tensors, the op tape, an LSTM step, Adam, and a
//! finite-difference gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod lstm;
pub mod param;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use lstm::{lstm_cell, LstmVars};
pub use param::Param;
pub use tape::{Tape, Var};
pub use tensor::{Scalar, Tensor};
