//! Dense `f64` tensors with reverse-mode differentiation.

mod conv;
mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod params;
mod tensor;

pub use conv::{conv3d_down, Conv3dSpec};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use params::{Init, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
