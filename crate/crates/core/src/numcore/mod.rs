//! Dense `f64` tensors with reverse-mode automatic differentiation.

mod gradcheck;
pub mod ops;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error};
pub use params::{Bound, ParamId, ParamStore};
pub use tape::{ConvGeom, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
