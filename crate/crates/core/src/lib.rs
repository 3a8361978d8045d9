//! Statute-law retrieval lab.
//!
//! Lexical retrieval with BM25, attentive neural re-ranking and score
//! ensembling, rule-based legal data augmentation, knowledge-injection
//! training (HYDRA heads and TRE injection needles) and embedding quality
//! metrics, all on top of a small tensor core with reverse-mode gradients.
//!
//! The numeric core is generic over [`Scalar`] (`f32` / `f64`); the aliases
//! below pin the `f64` instantiation used throughout the models.

pub mod augment;
pub mod corpus;
pub mod embedmetrics;
pub mod encoders;
pub mod error;
pub mod evalkit;
pub mod inject;
pub mod lexical;
pub mod rankers;
pub mod scalar;
pub mod selftest;
pub mod synth;
pub mod tensorcore;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = tensorcore::Tensor<f64>;
pub type Tensor32 = tensorcore::Tensor<f32>;
pub type Tape64 = tensorcore::Tape<f64>;
pub type Params64 = tensorcore::Params<f64>;
