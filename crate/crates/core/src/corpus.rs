//! Segment and corpus containers.
//!
//! A corpus is an ordered collection of segments with unique ids. Feature
//! segments hold continuous frames (flat row-major `f32`, one shared
//! dimensionality per corpus); quantized segments hold discrete word ids
//! bounded by the vocabulary size of the codebook that produced them.
//! Constructors validate every invariant so downstream stages can assume
//! well-formed data.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("segment `{id}` has no frames/words")]
    EmptySegment { id: String },
    #[error("corpus has no segments")]
    EmptyCorpus,
    #[error("segment `{id}`: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("segment `{id}`: frame buffer length {len} is not a multiple of dimension {dim}")]
    RaggedFrames { id: String, len: usize, dim: usize },
    #[error("segment `{id}`: non-finite value at frame {frame}, dim {dim}")]
    NonFiniteValue {
        id: String,
        frame: usize,
        dim: usize,
    },
    #[error("duplicate segment id `{id}`")]
    DuplicateId { id: String },
    #[error("segment `{id}`: word id {word} is out of range for vocabulary size {vocab}")]
    WordOutOfRange { id: String, word: u32, vocab: u32 },
    #[error("split fraction {fraction} must lie strictly inside (0, 1)")]
    InvalidFraction { fraction: f64 },
    #[error("stratum `{label}` has {count} segment(s); splitting needs at least 2")]
    StratumTooSmall { label: String, count: usize },
}

/// A segment of continuous feature frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSegment {
    id: String,
    source_label: Option<String>,
    dim: usize,
    frames: Vec<f32>,
}

impl FeatureSegment {
    /// `frames` is row-major `T × dim`; T ≥ 1, dim ≥ 1, all values finite.
    pub fn new(
        id: impl Into<String>,
        source_label: Option<String>,
        dim: usize,
        frames: Vec<f32>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        if dim == 0 || frames.is_empty() {
            return Err(CorpusError::EmptySegment { id });
        }
        if !frames.len().is_multiple_of(dim) {
            return Err(CorpusError::RaggedFrames {
                id,
                len: frames.len(),
                dim,
            });
        }
        if let Some(bad) = frames.iter().position(|v| !v.is_finite()) {
            return Err(CorpusError::NonFiniteValue {
                id,
                frame: bad / dim,
                dim: bad % dim,
            });
        }
        Ok(Self {
            id,
            source_label,
            dim,
            frames,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn source_label(&self) -> Option<&str> {
        self.source_label.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len() / self.dim
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.frames[t * self.dim..(t + 1) * self.dim]
    }

    /// Flat row-major frame buffer.
    pub fn frames(&self) -> &[f32] {
        &self.frames
    }
}

/// A segment of discrete acoustic-word ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedSegment {
    id: String,
    source_label: Option<String>,
    words: Vec<u32>,
}

impl QuantizedSegment {
    pub fn new(
        id: impl Into<String>,
        source_label: Option<String>,
        words: Vec<u32>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        if words.is_empty() {
            return Err(CorpusError::EmptySegment { id });
        }
        Ok(Self {
            id,
            source_label,
            words,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn source_label(&self) -> Option<&str> {
        self.source_label.as_deref()
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Common view over both corpus kinds, used by the stratified splitter.
pub trait Corpus {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn label_of(&self, index: usize) -> Option<&str>;
    fn id_of(&self, index: usize) -> &str;
}

/// Ordered collection of feature segments with one shared dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCorpus {
    dim: usize,
    segments: Vec<FeatureSegment>,
}

impl FeatureCorpus {
    pub fn new(segments: Vec<FeatureSegment>) -> Result<Self, CorpusError> {
        let dim = match segments.first() {
            Some(s) => s.dim(),
            None => return Err(CorpusError::EmptyCorpus),
        };
        let mut seen = HashSet::new();
        for seg in &segments {
            if seg.dim() != dim {
                return Err(CorpusError::DimensionMismatch {
                    id: seg.id().to_string(),
                    expected: dim,
                    got: seg.dim(),
                });
            }
            if !seen.insert(seg.id().to_string()) {
                return Err(CorpusError::DuplicateId {
                    id: seg.id().to_string(),
                });
            }
        }
        Ok(Self { dim, segments })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> &[FeatureSegment] {
        &self.segments
    }

    pub fn total_frames(&self) -> usize {
        self.segments.iter().map(|s| s.num_frames()).sum()
    }

    /// Stratified split into (train, test); see [`split_indices`] for the
    /// selection rule. Both halves preserve the original segment order.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Self, Self), CorpusError> {
        let labels: Vec<Option<&str>> = self.segments.iter().map(|s| s.source_label()).collect();
        let (train_idx, test_idx) = split_indices(&labels, fraction, seed)?;
        let pick = |idx: &[usize]| {
            Self::new(idx.iter().map(|&i| self.segments[i].clone()).collect())
                .expect("subset of a valid corpus is valid")
        };
        Ok((pick(&train_idx), pick(&test_idx)))
    }
}

impl Corpus for FeatureCorpus {
    fn len(&self) -> usize {
        self.segments.len()
    }
    fn label_of(&self, index: usize) -> Option<&str> {
        self.segments[index].source_label()
    }
    fn id_of(&self, index: usize) -> &str {
        self.segments[index].id()
    }
}

/// Ordered collection of quantized segments over a fixed vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedCorpus {
    vocab_size: u32,
    segments: Vec<QuantizedSegment>,
}

impl QuantizedCorpus {
    pub fn new(vocab_size: u32, segments: Vec<QuantizedSegment>) -> Result<Self, CorpusError> {
        if segments.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut seen = HashSet::new();
        for seg in &segments {
            if let Some(&w) = seg.words().iter().find(|&&w| w >= vocab_size) {
                return Err(CorpusError::WordOutOfRange {
                    id: seg.id().to_string(),
                    word: w,
                    vocab: vocab_size,
                });
            }
            if !seen.insert(seg.id().to_string()) {
                return Err(CorpusError::DuplicateId {
                    id: seg.id().to_string(),
                });
            }
        }
        Ok(Self {
            vocab_size,
            segments,
        })
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn segments(&self) -> &[QuantizedSegment] {
        &self.segments
    }

    pub fn total_words(&self) -> usize {
        self.segments.iter().map(|s| s.len()).sum()
    }

    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Self, Self), CorpusError> {
        let labels: Vec<Option<&str>> = self.segments.iter().map(|s| s.source_label()).collect();
        let (train_idx, test_idx) = split_indices(&labels, fraction, seed)?;
        let pick = |idx: &[usize]| {
            Self::new(
                self.vocab_size,
                idx.iter().map(|&i| self.segments[i].clone()).collect(),
            )
            .expect("subset of a valid corpus is valid")
        };
        Ok((pick(&train_idx), pick(&test_idx)))
    }
}

impl Corpus for QuantizedCorpus {
    fn len(&self) -> usize {
        self.segments.len()
    }
    fn label_of(&self, index: usize) -> Option<&str> {
        self.segments[index].source_label()
    }
    fn id_of(&self, index: usize) -> &str {
        self.segments[index].id()
    }
}

/// Stratified train/test index selection.
///
/// Segments are grouped by `source_label` (unlabeled segments form their own
/// stratum). Within each stratum the indices are shuffled by a ChaCha20
/// generator seeded with `seed`, and `round(fraction · count)` of them —
/// clamped so that both sides keep at least one segment — go to train. The
/// returned index lists are sorted ascending, so both halves preserve corpus
/// order; together they partition `0..labels.len()`.
pub fn split_indices(
    labels: &[Option<&str>],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), CorpusError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::InvalidFraction { fraction });
    }
    let mut strata: std::collections::BTreeMap<Option<&str>, Vec<usize>> =
        std::collections::BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        strata.entry(*label).or_default().push(i);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, mut idx) in strata {
        if idx.len() < 2 {
            return Err(CorpusError::StratumTooSmall {
                label: label.unwrap_or("<unlabeled>").to_string(),
                count: idx.len(),
            });
        }
        let n = idx.len();
        let want = (fraction * n as f64 + 0.5).floor() as usize;
        let n_train = want.clamp(1, n - 1);
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
