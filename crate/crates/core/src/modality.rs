//! Per-modality input handling: text tokenization against a corpus-built
//! vocabulary, continuous (acoustic/visual) pseudo-token sequences, and the
//! branch encoders that turn both into fixed-length embeddings.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::encoder::{
    add_positional_encoding, cls_pool, encoder_forward, mean_pool, AttentionMask, EncoderConfig,
    EncoderParams,
};
use crate::error::{Error, Result};
use crate::params::{BoundParams, ParamStore};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;
pub const NUM_RESERVED: usize = 4;

/// Default magnitude bound applied by [`sanitize_features`]. COVAREP-style
/// acoustic descriptors occasionally contain NaN (unvoiced frames) or
/// outliers; everything is forced into [-bound, bound].
pub const DEFAULT_CLAMP: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Audio,
    Visual,
}

/// Token table. Ids 0..3 are reserved (PAD/UNK/CLS/SEP); corpus tokens get
/// dense ids starting at 4 in the order of the backing list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), NUM_RESERVED + i).is_some() {
                return Err(Error::Contract(format!("duplicate vocabulary token {t}")));
            }
        }
        Ok(Vocabulary { tokens, ids })
    }

    /// Rebuild the lookup table after deserialization.
    pub fn rebuild_index(&mut self) {
        self.ids = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), NUM_RESERVED + i))
            .collect();
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    /// Table size including the reserved ids.
    pub fn size(&self) -> usize {
        NUM_RESERVED + self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Lowercase and split into maximal alphanumeric runs; punctuation separates
/// tokens and is dropped.
pub fn normalize_text(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Tokens with corpus frequency >= `min_count`, ids assigned in descending
/// frequency then lexicographic order.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Contract("vocabulary corpus is empty".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in corpus {
        for tok in normalize_text(text.as_ref()) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t).collect())
}

/// Token ids for one utterance: CLS first, SEP last, optionally PAD-extended
/// with the mask marking padding invalid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub mask: AttentionMask,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Extend with PAD to `len`; padded positions are masked invalid.
    pub fn pad_to(&self, len: usize) -> Result<TokenSequence> {
        if len < self.ids.len() {
            return Err(Error::Param(format!(
                "pad_to {} shorter than sequence {}",
                len,
                self.ids.len()
            )));
        }
        let mut ids = self.ids.clone();
        let mut flags = self.mask.flags().to_vec();
        ids.resize(len, PAD_ID);
        flags.resize(len, false);
        Ok(TokenSequence {
            ids,
            mask: AttentionMask::new(flags)?,
        })
    }
}

/// Lowercase, split punctuation away, map through the vocabulary with UNK
/// fallback, wrap in CLS/SEP, and truncate to `max_len` keeping both markers.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> Result<TokenSequence> {
    if max_len < 3 {
        return Err(Error::Param(format!(
            "max_len must be at least 3 (CLS + token + SEP), got {max_len}"
        )));
    }
    let words = normalize_text(text);
    let body = words
        .iter()
        .map(|w| vocab.id_of(w).unwrap_or(UNK_ID))
        .take(max_len - 2);
    let mut ids = Vec::with_capacity(max_len.min(words.len() + 2));
    ids.push(CLS_ID);
    ids.extend(body);
    ids.push(SEP_ID);
    let mask = AttentionMask::all_valid(ids.len())?;
    Ok(TokenSequence { ids, mask })
}

/// One continuous (acoustic or visual) frame sequence: `frames x dim`
/// features row-major, with per-frame validity.
#[derive(Debug, Clone)]
pub struct ContinuousSequence<T: Scalar> {
    pub features: Vec<T>,
    pub frames: usize,
    pub dim: usize,
    pub mask: AttentionMask,
}

impl<T: Scalar> ContinuousSequence<T> {
    pub fn new(features: Vec<T>, frames: usize, dim: usize, mask: AttentionMask) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Contract(
                "continuous sequence needs at least one frame".into(),
            ));
        }
        if features.len() != frames * dim || mask.len() != frames {
            return Err(Error::Shape(format!(
                "continuous sequence: {} values for {} x {} with mask {}",
                features.len(),
                frames,
                dim,
                mask.len()
            )));
        }
        Ok(ContinuousSequence {
            features,
            frames,
            dim,
            mask,
        })
    }
}

/// Replace NaN with 0, map infinities to the signed bound, and clamp
/// everything into [-bound, bound].
pub fn sanitize_features<T: Scalar>(values: &mut [T], bound: T) {
    for v in values.iter_mut() {
        if v.is_nan() {
            *v = T::zero();
        } else if *v > bound {
            *v = bound;
        } else if *v < -bound {
            *v = -bound;
        }
    }
}

/// Fixed-length embedding of one modality.
#[derive(Debug, Clone)]
pub struct ModalityEmbedding<T: Scalar> {
    pub vector: Tensor<T>,
    pub modality: Modality,
}

/// Text branch weights: token embedding table plus encoder stack.
#[derive(Debug)]
pub struct TextBranchParams<T: Scalar> {
    pub embed: Tensor<T>,
    pub encoder: EncoderParams<T>,
}

impl<T: Scalar> TextBranchParams<T> {
    pub fn register(
        store: &mut ParamStore<T>,
        prefix: &str,
        vocab_size: usize,
        config: &EncoderConfig,
        rng: &mut RngState,
    ) -> Result<()> {
        store.register_xavier(
            &format!("{prefix}.embed"),
            vocab_size,
            config.model_dim,
            rng,
        )?;
        EncoderParams::register(store, &format!("{prefix}.enc"), config, rng)
    }

    pub fn bind(bound: &BoundParams<T>, prefix: &str, config: &EncoderConfig) -> Result<Self> {
        Ok(TextBranchParams {
            embed: bound.get(&format!("{prefix}.embed"))?.clone(),
            encoder: EncoderParams::bind(bound, &format!("{prefix}.enc"), config.num_layers)?,
        })
    }
}

/// Continuous branch weights: frame projection plus encoder stack.
#[derive(Debug)]
pub struct ContinuousBranchParams<T: Scalar> {
    pub projection: Tensor<T>,
    pub proj_bias: Tensor<T>,
    pub encoder: EncoderParams<T>,
}

impl<T: Scalar> ContinuousBranchParams<T> {
    pub fn register(
        store: &mut ParamStore<T>,
        prefix: &str,
        feature_dim: usize,
        config: &EncoderConfig,
        rng: &mut RngState,
    ) -> Result<()> {
        store.register_xavier(
            &format!("{prefix}.proj.w"),
            feature_dim,
            config.model_dim,
            rng,
        )?;
        store.register_zeros(&format!("{prefix}.proj.b"), vec![config.model_dim])?;
        EncoderParams::register(store, &format!("{prefix}.enc"), config, rng)
    }

    pub fn bind(bound: &BoundParams<T>, prefix: &str, config: &EncoderConfig) -> Result<Self> {
        Ok(ContinuousBranchParams {
            projection: bound.get(&format!("{prefix}.proj.w"))?.clone(),
            proj_bias: bound.get(&format!("{prefix}.proj.b"))?.clone(),
            encoder: EncoderParams::bind(bound, &format!("{prefix}.enc"), config.num_layers)?,
        })
    }
}

/// Embedding lookup, positional signal, encoder stack, then the hidden state
/// of the leading classification token.
pub fn encode_text<T: Scalar>(
    graph: &Graph<T>,
    tokens: &TokenSequence,
    params: &TextBranchParams<T>,
    config: &EncoderConfig,
    training: bool,
    rng: &mut RngState,
) -> Result<ModalityEmbedding<T>> {
    let _ = graph;
    let seq = params.embed.embedding(&tokens.ids)?;
    let seq = add_positional_encoding(&seq, config.max_seq_len)?;
    let enc = encoder_forward(config, &params.encoder, &seq, &tokens.mask, training, rng)?;
    Ok(ModalityEmbedding {
        vector: cls_pool(&enc)?,
        modality: Modality::Text,
    })
}

/// Per-frame linear projection, positional signal, encoder stack, then mean
/// pooling over the valid frames.
pub fn encode_continuous<T: Scalar>(
    graph: &Graph<T>,
    seq: &ContinuousSequence<T>,
    params: &ContinuousBranchParams<T>,
    config: &EncoderConfig,
    modality: Modality,
    training: bool,
    rng: &mut RngState,
) -> Result<ModalityEmbedding<T>> {
    let proj_dim = params.projection.shape()[0];
    if seq.dim != proj_dim {
        return Err(Error::Shape(format!(
            "feature dim {} vs projection input dim {}",
            seq.dim, proj_dim
        )));
    }
    let frames = graph.constant(seq.features.clone(), vec![seq.frames, seq.dim])?;
    let projected = frames.matmul(&params.projection)?.add_row(&params.proj_bias)?;
    let projected = add_positional_encoding(&projected, config.max_seq_len)?;
    let enc = encoder_forward(config, &params.encoder, &projected, &seq.mask, training, rng)?;
    Ok(ModalityEmbedding {
        vector: mean_pool(&enc, &seq.mask)?,
        modality,
    })
}
