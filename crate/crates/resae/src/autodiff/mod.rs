//! Numeric core: dense f64 tensors, a reverse-mode tape, parameter storage,
//! Adam, and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod ops;
mod params;
mod tape;
mod tensor;

pub use adam::Adam;
pub use gradcheck::{grad_check, GradCheckOpts, GradCheckReport, ParamGradReport};
pub use ops::{scaled_dot_attention, Activation, PoolKind};
pub use params::{ParamStore, ParamVars};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
