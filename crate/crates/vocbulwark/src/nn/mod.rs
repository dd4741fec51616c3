//! Differentiable substrate: tensors, a reverse-mode tape, and the operator
//! set shared by the adapter, backbone, extractor, and losses.

mod grad_check;
mod ops_basic;
mod ops_conv;
mod ops_pool_norm;
mod ops_spectral;
mod param;
mod tape;
mod tensor;

pub use grad_check::grad_check;
pub use ops_conv::conv_out_len;
pub use ops_spectral::PadMode;
pub use param::{init_uniform, Bound, Param, ParamSet};
pub use tape::{GradStore, Tape, Var};
pub use tensor::{dot_lanes, sum_lanes, Scalar, Shape, Tensor};
