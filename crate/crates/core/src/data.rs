//! Dataset file format, split handling, batching, and the label-correlated
//! synthetic generator used for desk-scale training and verification.
//!
//! A manifest is a JSON-lines file: one header object
//! `{"version":1,"audio_dim":..,"visual_dim":..}` followed by one record
//! object per line. Serialization is canonical (fixed key order, shortest
//! round-trip float formatting), so equal manifests produce byte-identical
//! files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::AttentionMask;
use crate::error::{Error, Result};
use crate::modality::{sanitize_features, tokenize, ContinuousSequence, TokenSequence, Vocabulary, DEFAULT_CLAMP};
use crate::rng::RngState;
use crate::scalar::Scalar;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Param(format!(
                "unknown split {other:?} (expected train|validation|test)"
            ))),
        }
    }
}

/// One annotated utterance: transcript plus aligned acoustic and visual
/// frame matrices and the integer sentiment label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: String,
    pub split: Split,
    pub text: String,
    pub audio: Vec<Vec<f32>>,
    pub visual: Vec<Vec<f32>>,
    pub label: i32,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestHeader {
    version: u32,
    audio_dim: usize,
    visual_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub audio_dim: usize,
    pub visual_dim: usize,
    pub train: Vec<SegmentRecord>,
    pub validation: Vec<SegmentRecord>,
    pub test: Vec<SegmentRecord>,
}

impl DatasetManifest {
    pub fn new(audio_dim: usize, visual_dim: usize) -> Self {
        DatasetManifest {
            audio_dim,
            visual_dim,
            ..Default::default()
        }
    }

    pub fn split(&self, split: Split) -> &[SegmentRecord] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<SegmentRecord> {
        match split {
            Split::Train => &mut self.train,
            Split::Validation => &mut self.validation,
            Split::Test => &mut self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate_record(&self, rec: &SegmentRecord) -> Result<()> {
        if !(-3..=3).contains(&rec.label) {
            return Err(Error::Data(format!(
                "record {}: label {} outside -3..=+3",
                rec.id, rec.label
            )));
        }
        if rec.audio.is_empty() || rec.visual.is_empty() {
            return Err(Error::Data(format!(
                "record {}: feature matrices need at least one frame",
                rec.id
            )));
        }
        for row in &rec.audio {
            if row.len() != self.audio_dim {
                return Err(Error::Data(format!(
                    "record {}: audio frame width {} vs declared dim {}",
                    rec.id,
                    row.len(),
                    self.audio_dim
                )));
            }
        }
        for row in &rec.visual {
            if row.len() != self.visual_dim {
                return Err(Error::Data(format!(
                    "record {}: visual frame width {} vs declared dim {}",
                    rec.id,
                    row.len(),
                    self.visual_dim
                )));
            }
        }
        Ok(())
    }
}

/// Parse and fully validate a manifest file: header first, then every record
/// checked against the declared dims, the label range, and id uniqueness.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let content =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = content.lines().enumerate();
    let header: ManifestHeader = match lines.next() {
        Some((_, line)) => serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("line 1: bad manifest header: {e}")))?,
        None => return Err(Error::Parse("empty file: missing manifest header".into())),
    };
    if header.version != MANIFEST_VERSION {
        return Err(Error::Incompatible(format!(
            "manifest version {} (this build reads version {})",
            header.version, MANIFEST_VERSION
        )));
    }
    let mut manifest = DatasetManifest::new(header.audio_dim, header.visual_dim);
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let rec: SegmentRecord = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("line {}: {e}", idx + 1)))?;
        manifest.validate_record(&rec)?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::Corrupt(format!("duplicate record id {}", rec.id)));
        }
        manifest.split_mut(rec.split).push(rec);
    }
    Ok(manifest)
}

/// Canonical serialization: header line, then records in train, validation,
/// test order. Identical manifests produce byte-identical files.
pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let header = ManifestHeader {
        version: MANIFEST_VERSION,
        audio_dim: manifest.audio_dim,
        visual_dim: manifest.visual_dim,
    };
    writeln!(out, "{}", serde_json::to_string(&header).expect("header json"))
        .expect("string write");
    for split in Split::ALL {
        for rec in manifest.split(split) {
            let line = serde_json::to_string(rec)
                .map_err(|e| Error::Parse(format!("record {}: {e}", rec.id)))?;
            writeln!(out, "{line}").expect("string write");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Synthetic dataset shape. `separability` interpolates between
/// label-independent features (0.0) and cleanly separable classes (1.0).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_total: usize,
    pub seed: u64,
    pub separability: f64,
    pub audio_dim: usize,
    pub visual_dim: usize,
    pub text_len_range: (usize, usize),
    pub audio_len_range: (usize, usize),
    pub visual_len_range: (usize, usize),
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_total: 700,
            seed: 42,
            separability: 1.0,
            audio_dim: 74,
            visual_dim: 35,
            text_len_range: (3, 8),
            audio_len_range: (6, 12),
            visual_len_range: (4, 10),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.separability) {
            return Err(Error::Param(format!(
                "separability must be in [0, 1], got {}",
                self.separability
            )));
        }
        if self.audio_dim == 0 || self.visual_dim == 0 {
            return Err(Error::Param("feature dims must be positive".into()));
        }
        for (lo, hi) in [
            self.text_len_range,
            self.audio_len_range,
            self.visual_len_range,
        ] {
            if lo == 0 || lo > hi {
                return Err(Error::Param(format!(
                    "bad sequence length range ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    /// 70/15/15 split counts (rounded; remainder goes to test).
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let n_train = (self.n_total as f64 * 0.70).round() as usize;
        let n_val = (self.n_total as f64 * 0.15).round() as usize;
        (n_train, n_val, self.n_total - n_train - n_val)
    }
}

const TOKENS_PER_CLASS: usize = 6;
const NOISE_TOKENS: usize = 30;
/// Per-dimension scale of the class mean vectors before separability
/// scaling; frame noise is unit normal.
const CLASS_MEAN_SCALE: f64 = 1.0;

fn class_token(class: usize, j: usize) -> String {
    format!("cls{class}tok{j}")
}

fn noise_token(j: usize) -> String {
    format!("filler{j}")
}

/// Deterministically generate a label-correlated synthetic dataset.
///
/// Per record: the label is uniform over the 7 classes; text mixes
/// class-indicative tokens with filler at rate 1 - separability; audio and
/// visual frames are unit-noise draws around per-class means scaled by
/// separability.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<DatasetManifest> {
    spec.validate()?;
    let mut rng = RngState::new(spec.seed);
    let s = spec.separability;

    // Fixed per-class mean vectors for both continuous modalities.
    let audio_means: Vec<Vec<f64>> = (0..7)
        .map(|_| {
            (0..spec.audio_dim)
                .map(|_| rng.normal() * CLASS_MEAN_SCALE)
                .collect()
        })
        .collect();
    let visual_means: Vec<Vec<f64>> = (0..7)
        .map(|_| {
            (0..spec.visual_dim)
                .map(|_| rng.normal() * CLASS_MEAN_SCALE)
                .collect()
        })
        .collect();

    let (n_train, n_val, n_test) = spec.split_counts();
    let mut manifest = DatasetManifest::new(spec.audio_dim, spec.visual_dim);

    let mut frames = |rng: &mut RngState, range: (usize, usize), dim: usize, mean: &[f64]| {
        let t = range.0 + rng.below(range.1 - range.0 + 1);
        (0..t)
            .map(|_| {
                (0..dim)
                    .map(|d| (s * mean[d] + rng.normal()) as f32)
                    .collect::<Vec<f32>>()
            })
            .collect::<Vec<_>>()
    };

    for idx in 0..spec.n_total {
        let split = if idx < n_train {
            Split::Train
        } else if idx < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
        let class = rng.below(7);
        let label = class as i32 - 3;

        let text_len =
            spec.text_len_range.0 + rng.below(spec.text_len_range.1 - spec.text_len_range.0 + 1);
        let words: Vec<String> = (0..text_len)
            .map(|_| {
                if rng.next_f64() < s {
                    class_token(class, rng.below(TOKENS_PER_CLASS))
                } else {
                    noise_token(rng.below(NOISE_TOKENS))
                }
            })
            .collect();

        let audio = frames(&mut rng, spec.audio_len_range, spec.audio_dim, &audio_means[class]);
        let visual = frames(
            &mut rng,
            spec.visual_len_range,
            spec.visual_dim,
            &visual_means[class],
        );

        manifest.split_mut(split).push(SegmentRecord {
            id: format!("synth-{idx:05}"),
            split,
            text: words.join(" "),
            audio,
            visual,
            label,
        });
    }
    debug_assert_eq!(manifest.test.len(), n_test);
    Ok(manifest)
}

/// Epoch batching: a seeded permutation of the split, chunked into
/// `batch_size` batches with one short tail. The permutation stream is
/// derived from (seed, epoch), so a given epoch always sees the same order.
pub fn split_iter<'a>(
    records: &'a [SegmentRecord],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<&'a SegmentRecord>>> {
    if records.is_empty() {
        return Err(Error::Contract("split_iter over an empty split".into()));
    }
    if batch_size == 0 {
        return Err(Error::Param("batch_size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = RngState::derived(seed, epoch as u64);
    rng.shuffle(&mut order);
    Ok(order
        .chunks(batch_size)
        .map(|chunk| chunk.iter().map(|&i| &records[i]).collect())
        .collect())
}

/// Deterministic in-order batching for evaluation.
pub fn eval_batches(records: &[SegmentRecord], batch_size: usize) -> Result<Vec<Vec<&SegmentRecord>>> {
    if records.is_empty() {
        return Err(Error::Contract("evaluation over an empty split".into()));
    }
    if batch_size == 0 {
        return Err(Error::Param("batch_size must be positive".into()));
    }
    Ok(records
        .chunks(batch_size)
        .map(|chunk| chunk.iter().collect())
        .collect())
}

/// Model-ready view of one batch: tokenized text and sanitized continuous
/// sequences, all padded to the batch-max lengths with masks marking exactly
/// the padded positions invalid.
#[derive(Debug)]
pub struct AssembledBatch<T: Scalar> {
    pub ids: Vec<String>,
    pub tokens: Vec<TokenSequence>,
    pub audio: Vec<ContinuousSequence<T>>,
    pub visual: Vec<ContinuousSequence<T>>,
    /// Class indices 0..6.
    pub targets: Vec<usize>,
    /// Sentiment values -3..=+3, aligned with `targets`.
    pub labels: Vec<i32>,
}

impl<T: Scalar> AssembledBatch<T> {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

fn pad_continuous<T: Scalar>(
    rows: &[Vec<f32>],
    dim: usize,
    padded_len: usize,
) -> Result<ContinuousSequence<T>> {
    let frames = rows.len();
    let mut features = vec![T::zero(); padded_len * dim];
    for (r, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Shape(format!(
                "frame width {} vs expected {}",
                row.len(),
                dim
            )));
        }
        for (d, &v) in row.iter().enumerate() {
            features[r * dim + d] = T::from_f32(v);
        }
    }
    sanitize_features(&mut features, T::from_f64(DEFAULT_CLAMP));
    let mut flags = vec![true; frames];
    flags.resize(padded_len, false);
    ContinuousSequence::new(features, padded_len, dim, AttentionMask::new(flags)?)
}

/// Tokenize, sanitize, and pad one batch of records.
pub fn assemble_batch<T: Scalar>(
    records: &[&SegmentRecord],
    vocab: &Vocabulary,
    max_text_len: usize,
    audio_dim: usize,
    visual_dim: usize,
) -> Result<AssembledBatch<T>> {
    if records.is_empty() {
        return Err(Error::Contract("assemble_batch of zero records".into()));
    }
    let tokens_raw: Vec<TokenSequence> = records
        .iter()
        .map(|r| tokenize(&r.text, vocab, max_text_len))
        .collect::<Result<_>>()?;
    let max_tokens = tokens_raw.iter().map(|t| t.len()).max().unwrap();
    let tokens: Vec<TokenSequence> = tokens_raw
        .iter()
        .map(|t| t.pad_to(max_tokens))
        .collect::<Result<_>>()?;

    let max_audio = records.iter().map(|r| r.audio.len()).max().unwrap();
    let max_visual = records.iter().map(|r| r.visual.len()).max().unwrap();
    let mut audio = Vec::with_capacity(records.len());
    let mut visual = Vec::with_capacity(records.len());
    let mut targets = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for r in records {
        audio.push(pad_continuous(&r.audio, audio_dim, max_audio)?);
        visual.push(pad_continuous(&r.visual, visual_dim, max_visual)?);
        labels.push(r.label);
        targets.push(crate::head::ClassValueMap::index_of(r.label)?);
    }
    Ok(AssembledBatch {
        ids: records.iter().map(|r| r.id.clone()).collect(),
        tokens,
        audio,
        visual,
        targets,
        labels,
    })
}

/// Corpus view of a split's transcripts, for vocabulary building.
pub fn texts_of(records: &[SegmentRecord]) -> Vec<&str> {
    records.iter().map(|r| r.text.as_str()).collect()
}
