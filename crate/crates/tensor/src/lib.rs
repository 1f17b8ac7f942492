//! Dense row-major tensors with tape-based reverse-mode differentiation.
//!
//! Storage is generic over [`Element`]: `f32` for normal use, `f64` to run a
//! whole graph in double precision (used by the finite-difference checks in
//! [`gradcheck`]).

mod element;
mod error;
pub mod gradcheck;
pub mod ops;
mod tape;
mod tensor;

pub use element::Element;
pub use error::{Result, TensorError};
pub use ops::conv::conv2d_forward;
pub use ops::layout::{permute_tensor, reflect_index, IndexMap, PadMode, ZERO_FILL};
pub use ops::linalg::matmul_ex;
pub use ops::norm::LAYERNORM_EPS;
pub use tape::{Gradients, Tape, Var};
pub use tensor::{numel, strides, Tensor};
