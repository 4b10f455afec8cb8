//! Multimodal sentiment analysis from aligned text/audio/visual features.
//!
//! The pipeline: per-modality transformer encoders produce fixed-length
//! embeddings (text via a leading classification token, audio/visual via mean
//! pooling over frame sequences), the embeddings are fused (concatenation by
//! default, cross-attention as an option), and a small classification head
//! maps the fused vector to 7 sentiment classes on the -3..+3 scale.
//! Everything runs on an in-crate tensor/autodiff engine so training is
//! self-contained and bit-reproducible for a given seed.

pub mod cli;
pub mod data;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod head;
pub mod metrics;
pub mod modality;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::RngState;
pub use scalar::Scalar;
pub use tensor::{finite_diff_check, max_rel_err, Graph, Tensor};
