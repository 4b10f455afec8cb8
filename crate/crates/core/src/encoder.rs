//! Transformer encoder stack: multi-head self-attention, position-wise
//! feed-forward, post-norm residuals, sinusoidal positions, and the two
//! pooling modes used by the modality branches.

use crate::error::{Error, Result};
use crate::params::{BoundParams, ParamStore};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor};

/// Additive bias for masked attention scores. Large enough that the masked
/// weight underflows to exactly zero after softmax, finite so no NaN appears.
const MASK_BIAS: f64 = -1e9;

/// Layer-norm variance epsilon.
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub model_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ff_dim: usize,
    pub dropout_p: f64,
    pub max_seq_len: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.model_dim % 2 != 0 {
            return Err(Error::Param(format!(
                "model_dim must be a positive even integer, got {}",
                self.model_dim
            )));
        }
        if self.num_heads == 0 || self.model_dim % self.num_heads != 0 {
            return Err(Error::Param(format!(
                "num_heads ({}) must divide model_dim ({})",
                self.num_heads, self.model_dim
            )));
        }
        if self.ff_dim == 0 {
            return Err(Error::Param("ff_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Param(format!(
                "dropout_p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if self.max_seq_len == 0 {
            return Err(Error::Param("max_seq_len must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }
}

/// Per-position validity flags for one sequence. At least one position must
/// be valid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    valid: Vec<bool>,
}

impl AttentionMask {
    pub fn new(valid: Vec<bool>) -> Result<Self> {
        if !valid.iter().any(|&v| v) {
            return Err(Error::Contract(
                "attention mask has no valid positions".into(),
            ));
        }
        Ok(AttentionMask { valid })
    }

    pub fn all_valid(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Contract("empty attention mask".into()));
        }
        Ok(AttentionMask {
            valid: vec![true; len],
        })
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn flags(&self) -> &[bool] {
        &self.valid
    }

    pub fn num_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    fn bias_tensor<T: Scalar>(&self, graph: &Graph<T>) -> Result<Tensor<T>> {
        let bias = self
            .valid
            .iter()
            .map(|&v| {
                if v {
                    T::zero()
                } else {
                    T::from_f64(MASK_BIAS)
                }
            })
            .collect();
        graph.constant(bias, vec![self.valid.len()])
    }
}

/// Projection weights for one attention block.
#[derive(Debug)]
pub struct AttentionParams<T: Scalar> {
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bq: Tensor<T>,
    pub bk: Tensor<T>,
    pub bv: Tensor<T>,
    pub bo: Tensor<T>,
}

impl<T: Scalar> AttentionParams<T> {
    pub fn register(
        store: &mut ParamStore<T>,
        prefix: &str,
        dim: usize,
        rng: &mut RngState,
    ) -> Result<()> {
        for w in ["wq", "wk", "wv", "wo"] {
            store.register_xavier(&format!("{prefix}.{w}"), dim, dim, rng)?;
        }
        for b in ["bq", "bk", "bv", "bo"] {
            store.register_zeros(&format!("{prefix}.{b}"), vec![dim])?;
        }
        Ok(())
    }

    pub fn bind(bound: &BoundParams<T>, prefix: &str) -> Result<Self> {
        Ok(AttentionParams {
            wq: bound.get(&format!("{prefix}.wq"))?.clone(),
            wk: bound.get(&format!("{prefix}.wk"))?.clone(),
            wv: bound.get(&format!("{prefix}.wv"))?.clone(),
            wo: bound.get(&format!("{prefix}.wo"))?.clone(),
            bq: bound.get(&format!("{prefix}.bq"))?.clone(),
            bk: bound.get(&format!("{prefix}.bk"))?.clone(),
            bv: bound.get(&format!("{prefix}.bv"))?.clone(),
            bo: bound.get(&format!("{prefix}.bo"))?.clone(),
        })
    }
}

/// One encoder layer: attention block, feed-forward block, two layer norms.
#[derive(Debug)]
pub struct EncoderLayerParams<T: Scalar> {
    pub attn: AttentionParams<T>,
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
    pub ln1_gain: Tensor<T>,
    pub ln1_bias: Tensor<T>,
    pub ln2_gain: Tensor<T>,
    pub ln2_bias: Tensor<T>,
}

#[derive(Debug)]
pub struct EncoderParams<T: Scalar> {
    pub layers: Vec<EncoderLayerParams<T>>,
}

impl<T: Scalar> EncoderParams<T> {
    pub fn register(
        store: &mut ParamStore<T>,
        prefix: &str,
        config: &EncoderConfig,
        rng: &mut RngState,
    ) -> Result<()> {
        let d = config.model_dim;
        let f = config.ff_dim;
        for i in 0..config.num_layers {
            let lp = format!("{prefix}.layer{i}");
            AttentionParams::register(store, &format!("{lp}.attn"), d, rng)?;
            store.register_xavier(&format!("{lp}.ff.w1"), d, f, rng)?;
            store.register_zeros(&format!("{lp}.ff.b1"), vec![f])?;
            store.register_xavier(&format!("{lp}.ff.w2"), f, d, rng)?;
            store.register_zeros(&format!("{lp}.ff.b2"), vec![d])?;
            store.register_ones(&format!("{lp}.ln1.gain"), vec![d])?;
            store.register_zeros(&format!("{lp}.ln1.bias"), vec![d])?;
            store.register_ones(&format!("{lp}.ln2.gain"), vec![d])?;
            store.register_zeros(&format!("{lp}.ln2.bias"), vec![d])?;
        }
        Ok(())
    }

    pub fn bind(bound: &BoundParams<T>, prefix: &str, num_layers: usize) -> Result<Self> {
        let mut layers = Vec::with_capacity(num_layers);
        for i in 0..num_layers {
            let lp = format!("{prefix}.layer{i}");
            layers.push(EncoderLayerParams {
                attn: AttentionParams::bind(bound, &format!("{lp}.attn"))?,
                w1: bound.get(&format!("{lp}.ff.w1"))?.clone(),
                b1: bound.get(&format!("{lp}.ff.b1"))?.clone(),
                w2: bound.get(&format!("{lp}.ff.w2"))?.clone(),
                b2: bound.get(&format!("{lp}.ff.b2"))?.clone(),
                ln1_gain: bound.get(&format!("{lp}.ln1.gain"))?.clone(),
                ln1_bias: bound.get(&format!("{lp}.ln1.bias"))?.clone(),
                ln2_gain: bound.get(&format!("{lp}.ln2.gain"))?.clone(),
                ln2_bias: bound.get(&format!("{lp}.ln2.bias"))?.clone(),
            });
        }
        Ok(EncoderParams { layers })
    }
}

/// softmax(Q K^T / sqrt(d_k) + mask bias) V for one head.
///
/// Masked key positions get a large negative bias, so their attention weight
/// underflows to exactly zero and their V rows cannot influence the output.
pub fn scaled_dot_product_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    mask: &AttentionMask,
) -> Result<Tensor<T>> {
    let l = match q.shape() {
        [l, _] => *l,
        other => {
            return Err(Error::Shape(format!(
                "attention expects [L x d_k] queries, got {:?}",
                other
            )))
        }
    };
    if k.shape() != q.shape() || v.shape() != q.shape() {
        return Err(Error::Shape(format!(
            "attention Q/K/V shapes differ: {:?} / {:?} / {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    if mask.len() != l {
        return Err(Error::Shape(format!(
            "mask length {} vs sequence length {}",
            mask.len(),
            l
        )));
    }
    let d_k = q.shape()[1];
    let scale = T::from_f64(1.0 / (d_k as f64).sqrt());
    let scores = q.matmul(&k.transpose()?)?.scale(scale);
    let biased = scores.add_row(&mask.bias_tensor(q.graph())?)?;
    biased.softmax(1)?.matmul(v)
}

/// Multi-head attention over a `[L x model_dim]` sequence (self-attention
/// when q/k/v projections share the same input, which is how the encoder and
/// the cross-attention fusion block both use it).
pub fn multi_head_attention<T: Scalar>(
    x: &Tensor<T>,
    params: &AttentionParams<T>,
    num_heads: usize,
    mask: &AttentionMask,
) -> Result<Tensor<T>> {
    let d = match x.shape() {
        [_, d] => *d,
        other => {
            return Err(Error::Shape(format!(
                "attention expects [L x model_dim], got {:?}",
                other
            )))
        }
    };
    if num_heads == 0 || d % num_heads != 0 {
        return Err(Error::Param(format!(
            "num_heads {} must divide model_dim {}",
            num_heads, d
        )));
    }
    let head_dim = d / num_heads;
    let q_all = x.matmul(&params.wq)?.add_row(&params.bq)?;
    let k_all = x.matmul(&params.wk)?.add_row(&params.bk)?;
    let v_all = x.matmul(&params.wv)?.add_row(&params.bv)?;

    let mut heads = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let (s, e) = (h * head_dim, (h + 1) * head_dim);
        let q = q_all.slice_cols(s, e)?;
        let k = k_all.slice_cols(s, e)?;
        let v = v_all.slice_cols(s, e)?;
        heads.push(scaled_dot_product_attention(&q, &k, &v, mask)?);
    }
    let head_refs: Vec<&Tensor<T>> = heads.iter().collect();
    let merged = x.graph().concat_cols(&head_refs)?;
    merged.matmul(&params.wo)?.add_row(&params.bo)
}

/// Full encoder stack. Each layer is post-norm:
/// `x = LN(x + dropout(MHA(x)))` then `x = LN(x + dropout(FF(x)))`.
/// With `num_layers == 0` this is the identity.
pub fn encoder_forward<T: Scalar>(
    config: &EncoderConfig,
    params: &EncoderParams<T>,
    input: &Tensor<T>,
    mask: &AttentionMask,
    training: bool,
    rng: &mut RngState,
) -> Result<Tensor<T>> {
    match input.shape() {
        [l, d] if *d == config.model_dim && *l == mask.len() => {}
        other => {
            return Err(Error::Shape(format!(
                "encoder input {:?} vs model_dim {} and mask length {}",
                other,
                config.model_dim,
                mask.len()
            )))
        }
    }
    if params.layers.len() != config.num_layers {
        return Err(Error::Shape(format!(
            "{} layer parameter sets for {} configured layers",
            params.layers.len(),
            config.num_layers
        )));
    }
    let mut x = input.clone();
    for layer in &params.layers {
        let attn = multi_head_attention(&x, &layer.attn, config.num_heads, mask)?;
        let attn = attn.dropout(config.dropout_p, training, rng)?;
        x = x
            .add(&attn)?
            .layer_norm(&layer.ln1_gain, &layer.ln1_bias, T::from_f64(LN_EPS))?;

        let hidden = x.matmul(&layer.w1)?.add_row(&layer.b1)?.relu();
        let ff = hidden.matmul(&layer.w2)?.add_row(&layer.b2)?;
        let ff = ff.dropout(config.dropout_p, training, rng)?;
        x = x
            .add(&ff)?
            .layer_norm(&layer.ln2_gain, &layer.ln2_bias, T::from_f64(LN_EPS))?;
    }
    Ok(x)
}

/// Values of the fixed sinusoidal position signal for `l` positions.
pub fn sinusoidal_encoding(l: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; l * d];
    for pos in 0..l {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            pe[pos * d + 2 * i] = angle.sin();
            pe[pos * d + 2 * i + 1] = angle.cos();
        }
    }
    pe
}

/// Add the sinusoidal position signal to a `[L x model_dim]` sequence.
pub fn add_positional_encoding<T: Scalar>(
    input: &Tensor<T>,
    max_seq_len: usize,
) -> Result<Tensor<T>> {
    let (l, d) = match input.shape() {
        [l, d] => (*l, *d),
        other => {
            return Err(Error::Shape(format!(
                "positional encoding expects [L x model_dim], got {:?}",
                other
            )))
        }
    };
    if l > max_seq_len {
        return Err(Error::Param(format!(
            "sequence length {} exceeds max_seq_len {}",
            l, max_seq_len
        )));
    }
    let pe: Vec<T> = sinusoidal_encoding(l, d)
        .into_iter()
        .map(T::from_f64)
        .collect();
    let pe = input.graph().constant(pe, vec![l, d])?;
    input.add(&pe)
}

/// Sequence embedding for the text branch: the hidden state of position 0,
/// which holds the leading classification token by convention.
pub fn cls_pool<T: Scalar>(seq: &Tensor<T>) -> Result<Tensor<T>> {
    match seq.shape() {
        [l, _] if *l >= 1 => seq.row(0),
        other => Err(Error::Contract(format!(
            "cls_pool needs a nonempty [L x model_dim] sequence, got {:?}",
            other
        ))),
    }
}

/// Arithmetic mean over the valid (unmasked) rows of the sequence.
pub fn mean_pool<T: Scalar>(seq: &Tensor<T>, mask: &AttentionMask) -> Result<Tensor<T>> {
    seq.mean_rows(mask.flags())
}
