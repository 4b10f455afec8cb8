//! Classification head: dense -> ReLU -> layer norm -> dropout -> dense,
//! producing raw logits over the 7 sentiment classes. Softmax is applied by
//! the caller where it is needed (the loss uses log-softmax internally,
//! prediction takes an argmax directly).

use crate::encoder::LN_EPS;
use crate::error::{Error, Result};
use crate::fusion::FusedRepresentation;
use crate::params::{BoundParams, ParamStore};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 7;

/// Bijection between class indices 0..6 and sentiment values -3..+3.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClassValueMap;

impl ClassValueMap {
    pub fn value_of(index: usize) -> Result<i32> {
        if index >= NUM_CLASSES {
            return Err(Error::Index(format!(
                "class index {index} out of 0..{NUM_CLASSES}"
            )));
        }
        Ok(index as i32 - 3)
    }

    pub fn index_of(value: i32) -> Result<usize> {
        if !(-3..=3).contains(&value) {
            return Err(Error::Data(format!(
                "sentiment value {value} outside -3..=+3"
            )));
        }
        Ok((value + 3) as usize)
    }
}

#[derive(Debug)]
pub struct HeadParams<T: Scalar> {
    pub dense1_w: Tensor<T>,
    pub dense1_b: Tensor<T>,
    pub ln_gain: Tensor<T>,
    pub ln_bias: Tensor<T>,
    pub dense2_w: Tensor<T>,
    pub dense2_b: Tensor<T>,
}

impl<T: Scalar> HeadParams<T> {
    pub fn register(
        store: &mut ParamStore<T>,
        prefix: &str,
        fused_dim: usize,
        hidden_dim: usize,
        rng: &mut RngState,
    ) -> Result<()> {
        store.register_xavier(&format!("{prefix}.dense1.w"), fused_dim, hidden_dim, rng)?;
        store.register_zeros(&format!("{prefix}.dense1.b"), vec![hidden_dim])?;
        store.register_ones(&format!("{prefix}.ln.gain"), vec![hidden_dim])?;
        store.register_zeros(&format!("{prefix}.ln.bias"), vec![hidden_dim])?;
        store.register_xavier(&format!("{prefix}.dense2.w"), hidden_dim, NUM_CLASSES, rng)?;
        store.register_zeros(&format!("{prefix}.dense2.b"), vec![NUM_CLASSES])?;
        Ok(())
    }

    pub fn bind(bound: &BoundParams<T>, prefix: &str) -> Result<Self> {
        Ok(HeadParams {
            dense1_w: bound.get(&format!("{prefix}.dense1.w"))?.clone(),
            dense1_b: bound.get(&format!("{prefix}.dense1.b"))?.clone(),
            ln_gain: bound.get(&format!("{prefix}.ln.gain"))?.clone(),
            ln_bias: bound.get(&format!("{prefix}.ln.bias"))?.clone(),
            dense2_w: bound.get(&format!("{prefix}.dense2.w"))?.clone(),
            dense2_b: bound.get(&format!("{prefix}.dense2.b"))?.clone(),
        })
    }
}

/// Map a fused representation to raw logits of length 7.
pub fn head_forward<T: Scalar>(
    fused: &FusedRepresentation<T>,
    params: &HeadParams<T>,
    dropout_p: f64,
    training: bool,
    rng: &mut RngState,
) -> Result<Tensor<T>> {
    let fused_dim = fused.fused_dim();
    if params.dense1_w.shape()[0] != fused_dim {
        return Err(Error::Shape(format!(
            "fused vector length {} vs head input dim {}",
            fused_dim,
            params.dense1_w.shape()[0]
        )));
    }
    let x = fused.vector.reshape(vec![1, fused_dim])?;
    let hidden = x
        .matmul(&params.dense1_w)?
        .add_row(&params.dense1_b)?
        .relu()
        .layer_norm(&params.ln_gain, &params.ln_bias, T::from_f64(LN_EPS))?
        .dropout(dropout_p, training, rng)?;
    let logits = hidden.matmul(&params.dense2_w)?.add_row(&params.dense2_b)?;
    logits.reshape(vec![NUM_CLASSES])
}

/// Argmax over 7 finite logits, mapped to the sentiment value. Ties break
/// toward the lowest index (most negative sentiment).
pub fn predict_class<T: Scalar>(logits: &[T]) -> Result<i32> {
    if logits.len() != NUM_CLASSES {
        return Err(Error::Shape(format!(
            "expected {} logits, got {}",
            NUM_CLASSES,
            logits.len()
        )));
    }
    if logits.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("NaN logit in prediction".into()));
    }
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    ClassValueMap::value_of(best)
}
