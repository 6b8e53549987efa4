//! Minimal reverse-mode differentiation engine.
//!
//! Covers exactly the layer set of a 1-D residual classifier: convolution,
//! batch normalization, ReLU, max pooling, global average pooling, residual
//! addition, fully-connected layers and softmax / cross-entropy heads.

mod adam;
mod gradcheck;
mod scalar;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig, ParamGrad};
pub use gradcheck::{finite_difference_check, finite_difference_check_sampled, relative_error, GradCheckReport, FD_STEP, MAX_CHECKED_PARAMS};
pub use scalar::{gemm, Layout, Scalar};
pub use tape::{BatchStats, BnMode, Tape, Var, BN_EPS};
pub use tensor::Tensor;
