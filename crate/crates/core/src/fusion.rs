//! Combining the three modality embeddings into one joint representation.
//!
//! The default is early fusion by concatenation in the fixed order
//! text, audio, visual. An optional cross-attention mode runs one multi-head
//! attention block over the three embeddings stacked as a 3-token sequence
//! and mean-pools the result.

use serde::{Deserialize, Serialize};

use crate::encoder::{multi_head_attention, AttentionMask, AttentionParams};
use crate::error::{Error, Result};
use crate::modality::{Modality, ModalityEmbedding};
use crate::params::{BoundParams, ParamStore};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Concat,
    CrossAttention,
}

impl Default for FusionMode {
    fn default() -> Self {
        FusionMode::Concat
    }
}

/// Joint representation handed to the classifier head. `fused_dim` is
/// 3 x model_dim for concatenation and model_dim for cross-attention.
#[derive(Debug, Clone)]
pub struct FusedRepresentation<T: Scalar> {
    pub vector: Tensor<T>,
    pub mode: FusionMode,
}

impl<T: Scalar> FusedRepresentation<T> {
    pub fn fused_dim(&self) -> usize {
        self.vector.shape()[0]
    }
}

fn check_triple<T: Scalar>(
    h_text: &ModalityEmbedding<T>,
    h_audio: &ModalityEmbedding<T>,
    h_visual: &ModalityEmbedding<T>,
) -> Result<usize> {
    let expected = [
        (h_text, Modality::Text),
        (h_audio, Modality::Audio),
        (h_visual, Modality::Visual),
    ];
    for (emb, want) in &expected {
        if emb.modality != *want {
            return Err(Error::Contract(format!(
                "fusion expects (text, audio, visual) order, got {:?} in the {:?} slot",
                emb.modality, want
            )));
        }
    }
    let d = h_text.vector.shape().to_vec();
    if d.len() != 1 {
        return Err(Error::Shape(format!(
            "modality embeddings must be vectors, got {:?}",
            d
        )));
    }
    for emb in [h_audio, h_visual] {
        if emb.vector.shape() != d.as_slice() {
            return Err(Error::Shape(format!(
                "modality embedding lengths differ: {:?} vs {:?}",
                d,
                emb.vector.shape()
            )));
        }
    }
    Ok(d[0])
}

/// Early fusion: the three embeddings laid end to end, text first, then
/// audio, then visual. Lossless; each slice of the output recovers its input.
pub fn concat_fuse<T: Scalar>(
    h_text: &ModalityEmbedding<T>,
    h_audio: &ModalityEmbedding<T>,
    h_visual: &ModalityEmbedding<T>,
) -> Result<FusedRepresentation<T>> {
    check_triple(h_text, h_audio, h_visual)?;
    let vector = h_text
        .vector
        .graph()
        .concat(&[&h_text.vector, &h_audio.vector, &h_visual.vector])?;
    Ok(FusedRepresentation {
        vector,
        mode: FusionMode::Concat,
    })
}

/// Parameters of the single cross-attention fusion block.
#[derive(Debug)]
pub struct CrossAttentionParams<T: Scalar> {
    pub attn: AttentionParams<T>,
}

impl<T: Scalar> CrossAttentionParams<T> {
    pub fn register(
        store: &mut ParamStore<T>,
        prefix: &str,
        model_dim: usize,
        rng: &mut RngState,
    ) -> Result<()> {
        AttentionParams::register(store, &format!("{prefix}.attn"), model_dim, rng)
    }

    pub fn bind(bound: &BoundParams<T>, prefix: &str) -> Result<Self> {
        Ok(CrossAttentionParams {
            attn: AttentionParams::bind(bound, &format!("{prefix}.attn"))?,
        })
    }
}

/// Cross-attention fusion: stack the three embeddings as a 3-token sequence,
/// let every modality token attend over all three, and mean-pool the result
/// back to a single model_dim vector.
pub fn cross_attention_fuse<T: Scalar>(
    h_text: &ModalityEmbedding<T>,
    h_audio: &ModalityEmbedding<T>,
    h_visual: &ModalityEmbedding<T>,
    params: &CrossAttentionParams<T>,
    num_heads: usize,
    dropout_p: f64,
    training: bool,
    rng: &mut RngState,
) -> Result<FusedRepresentation<T>> {
    check_triple(h_text, h_audio, h_visual)?;
    let graph = h_text.vector.graph();
    let stacked = graph.stack_rows(&[&h_text.vector, &h_audio.vector, &h_visual.vector])?;
    let mask = AttentionMask::all_valid(3)?;
    let mixed = multi_head_attention(&stacked, &params.attn, num_heads, &mask)?;
    let mixed = mixed.dropout(dropout_p, training, rng)?;
    let vector = mixed.mean_rows(mask.flags())?;
    Ok(FusedRepresentation {
        vector,
        mode: FusionMode::CrossAttention,
    })
}

#[cfg(test)]
mod tests;
