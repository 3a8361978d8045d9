//! Dense tensors, reverse-mode gradients and the numeric kernels the models
//! are built from.

mod gradcheck;
pub mod io;
pub mod kernels;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_against};
pub use kernels::{
    avg_pool, ce_negsample, conv1d, matmul, mse_matrix, softargmax, softmax, sparsemax,
};
pub use params::{Bound, ParamId, Params};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
