//! Dense tensors, named parameters and hand-derived gradients for the
//! operators used by the growth model.

pub mod checkpoint;
pub mod gru;
pub mod init;
pub mod ops;
mod params;
mod tensor;

pub use gru::{gru_cell, gru_cell_backward, GruStep, GRU_PARAMS};
pub use ops::{
    clip_grad_norm, concat, embed_backward, embed_lookup, linear, linear_backward, relu, relu_backward,
    sgd_step, split,
};
pub use params::{ParamSet, ParamTensor, Partition};
pub use tensor::Tensor;
