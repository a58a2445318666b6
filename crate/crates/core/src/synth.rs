//! Seeded synthetic multi-domain corpus generation.
//!
//! Stands in for licensed multi-domain audio: a spec describes labeled
//! sources, and each source emits segments either as continuous Gaussian
//! feature frames (exercising the full quantize-then-model path) or as
//! discrete words drawn from known topic-model parameters (exercising the
//! topic model in isolation, with the generating weights recorded for
//! oracles). Generation is a pure function of the spec: the ChaCha20
//! generator seeded with `spec.seed` fixes every draw, so equal specs give
//! bitwise-equal corpora.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    CorpusError, FeatureCorpus, FeatureSegment, QuantizedCorpus, QuantizedSegment,
};
use crate::lda::TopicMatrix;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("spec has no sources")]
    NoSources,
    #[error("{what} must be at least 1")]
    ZeroCount { what: &'static str },
    #[error("source `{label}`: mixture weights sum to {sum}, expected 1")]
    WeightsNotNormalized { label: String, sum: f64 },
    #[error("source `{label}`: degenerate mixture (component {component} has weight {weight})")]
    DegenerateMixture {
        label: String,
        component: usize,
        weight: f64,
    },
    #[error("source `{label}`: component {component} has dimension {got}, expected {expected}")]
    ComponentDimension {
        label: String,
        component: usize,
        expected: usize,
        got: usize,
    },
    #[error("source labels must be unique; `{label}` repeats")]
    DuplicateLabel { label: String },
    #[error("sources mix Gaussian and topic-parameter emitters; use one regime per spec")]
    MixedRegimes,
    #[error("source `{label}`: {msg}")]
    BadLdaParams { label: String, msg: String },
    #[error("gaussian sources disagree on dimension: {a} vs {b}")]
    DimMismatch { a: usize, b: usize },
    #[error("topic-parameter sources disagree on vocabulary size: {a} vs {b}")]
    VocabMismatch { a: u32, b: u32 },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// One Gaussian mixture component with diagonal spread.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// How a Gaussian source picks mixture components.
///
/// `Frame` redraws the component for every frame (a classic mixture).
/// `Segment` draws it once per segment, so a multi-modal source produces
/// internally coherent segments that land in different modes — the shape a
/// sub-dividable real-world domain has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixScope {
    Frame,
    Segment,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmEmitter {
    pub dim: usize,
    pub scope: MixScope,
    pub components: Vec<GmmComponent>,
}

/// Ground-truth topic parameters for direct word sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaEmitter {
    /// Dirichlet parameter over topics, length K, all entries > 0.
    pub alpha: Vec<f64>,
    /// Topic-word probabilities; each topic column sums to 1.
    pub beta: TopicMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emitter {
    Gmm(GmmEmitter),
    Lda(LdaEmitter),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSpec {
    pub label: String,
    pub emitter: Emitter,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub segments_per_source: usize,
    pub frames_per_segment: usize,
    pub sources: Vec<SourceSpec>,
}

/// Either corpus kind, depending on the spec's emitter regime.
#[derive(Debug, Clone)]
pub enum SynthCorpus {
    Features(FeatureCorpus),
    Quantized(QuantizedCorpus),
}

/// Generating parameters recorded alongside the corpus for oracles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Per-segment source label, in corpus order.
    pub source_labels: Vec<String>,
    /// Per-segment generating topic weights (topic-parameter regime only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<Vec<Vec<f64>>>,
    /// Per-source generating topic parameters (topic-parameter regime only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lda_sources: Option<Vec<LdaSourceTruth>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaSourceTruth {
    pub label: String,
    pub alpha: Vec<f64>,
    pub beta: TopicMatrix,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: SynthCorpus,
    pub ground_truth: GroundTruth,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.sources.is_empty() {
            return Err(SynthError::NoSources);
        }
        if self.segments_per_source == 0 {
            return Err(SynthError::ZeroCount {
                what: "segments_per_source",
            });
        }
        if self.frames_per_segment == 0 {
            return Err(SynthError::ZeroCount {
                what: "frames_per_segment",
            });
        }
        let mut labels = std::collections::HashSet::new();
        let mut gmm_dim: Option<usize> = None;
        let mut lda_vocab: Option<u32> = None;
        for source in &self.sources {
            if !labels.insert(source.label.clone()) {
                return Err(SynthError::DuplicateLabel {
                    label: source.label.clone(),
                });
            }
            match &source.emitter {
                Emitter::Gmm(gmm) => {
                    if lda_vocab.is_some() {
                        return Err(SynthError::MixedRegimes);
                    }
                    if gmm.dim == 0 {
                        return Err(SynthError::ZeroCount { what: "dim" });
                    }
                    match gmm_dim {
                        None => gmm_dim = Some(gmm.dim),
                        Some(d) if d != gmm.dim => {
                            return Err(SynthError::DimMismatch { a: d, b: gmm.dim })
                        }
                        _ => {}
                    }
                    if gmm.components.is_empty() {
                        return Err(SynthError::ZeroCount { what: "components" });
                    }
                    let sum: f64 = gmm.components.iter().map(|c| c.weight).sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(SynthError::WeightsNotNormalized {
                            label: source.label.clone(),
                            sum,
                        });
                    }
                    for (ci, comp) in gmm.components.iter().enumerate() {
                        if comp.weight <= 0.0 {
                            return Err(SynthError::DegenerateMixture {
                                label: source.label.clone(),
                                component: ci,
                                weight: comp.weight,
                            });
                        }
                        if comp.mean.len() != gmm.dim || comp.std.len() != gmm.dim {
                            return Err(SynthError::ComponentDimension {
                                label: source.label.clone(),
                                component: ci,
                                expected: gmm.dim,
                                got: if comp.mean.len() != gmm.dim {
                                    comp.mean.len()
                                } else {
                                    comp.std.len()
                                },
                            });
                        }
                    }
                }
                Emitter::Lda(lda) => {
                    if gmm_dim.is_some() {
                        return Err(SynthError::MixedRegimes);
                    }
                    let bad = |msg: &str| SynthError::BadLdaParams {
                        label: source.label.clone(),
                        msg: msg.to_string(),
                    };
                    if lda.alpha.is_empty() || lda.alpha.iter().any(|&a| a.is_nan() || a <= 0.0) {
                        return Err(bad("alpha entries must be positive"));
                    }
                    if lda.beta.k != lda.alpha.len() {
                        return Err(bad("beta topic count does not match alpha length"));
                    }
                    if lda.beta.v == 0 || lda.beta.probs.len() != lda.beta.v * lda.beta.k {
                        return Err(bad("beta shape is inconsistent"));
                    }
                    for k in 0..lda.beta.k {
                        let col: f64 = (0..lda.beta.v).map(|i| lda.beta.prob(i, k)).sum();
                        if (col - 1.0).abs() > 1e-9 {
                            return Err(bad(&format!("beta column {k} sums to {col}")));
                        }
                    }
                    let v = lda.beta.v as u32;
                    match lda_vocab {
                        None => lda_vocab = Some(v),
                        Some(a) if a != v => return Err(SynthError::VocabMismatch { a, b: v }),
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }
}

/// Draw an index from normalized `weights` with one uniform variate.
fn sample_categorical(rng: &mut ChaCha20Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Dirichlet draw via normalized Gamma variates.
fn sample_dirichlet(rng: &mut ChaCha20Rng, alpha: &[f64]) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            let g = Gamma::new(a, 1.0).expect("validated alpha > 0");
            let x: f64 = g.sample(rng);
            // Gamma(a) draws with tiny a can underflow to exactly 0.
            x.max(1e-300)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= total;
    }
    draws
}

/// Generate a corpus from `spec`. Deterministic: equal specs produce
/// bitwise-identical output.
pub fn synthesize(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let is_gmm = matches!(spec.sources[0].emitter, Emitter::Gmm(_));
    let mut labels = Vec::new();

    if is_gmm {
        let mut segments = Vec::new();
        for source in &spec.sources {
            let Emitter::Gmm(gmm) = &source.emitter else {
                unreachable!("validated single regime")
            };
            let weights: Vec<f64> = gmm.components.iter().map(|c| c.weight).collect();
            for si in 0..spec.segments_per_source {
                let mut frames = Vec::with_capacity(spec.frames_per_segment * gmm.dim);
                let segment_comp = match gmm.scope {
                    MixScope::Segment => Some(sample_categorical(&mut rng, &weights)),
                    MixScope::Frame => None,
                };
                for _ in 0..spec.frames_per_segment {
                    let ci = segment_comp.unwrap_or_else(|| sample_categorical(&mut rng, &weights));
                    let comp = &gmm.components[ci];
                    for d in 0..gmm.dim {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        frames.push((comp.mean[d] + comp.std[d] * z) as f32);
                    }
                }
                let id = format!("{}-{:05}", source.label, si);
                segments.push(FeatureSegment::new(
                    id,
                    Some(source.label.clone()),
                    gmm.dim,
                    frames,
                )?);
                labels.push(source.label.clone());
            }
        }
        Ok(SynthOutput {
            corpus: SynthCorpus::Features(FeatureCorpus::new(segments)?),
            ground_truth: GroundTruth {
                source_labels: labels,
                theta_star: None,
                lda_sources: None,
            },
        })
    } else {
        let mut segments = Vec::new();
        let mut thetas = Vec::new();
        let mut truths = Vec::new();
        let mut vocab = 0u32;
        for source in &spec.sources {
            let Emitter::Lda(lda) = &source.emitter else {
                unreachable!("validated single regime")
            };
            vocab = lda.beta.v as u32;
            truths.push(LdaSourceTruth {
                label: source.label.clone(),
                alpha: lda.alpha.clone(),
                beta: lda.beta.clone(),
            });
            let k = lda.alpha.len();
            for si in 0..spec.segments_per_source {
                let theta = sample_dirichlet(&mut rng, &lda.alpha);
                let mut words = Vec::with_capacity(spec.frames_per_segment);
                let mut column = vec![0.0; lda.beta.v];
                for _ in 0..spec.frames_per_segment {
                    let z = sample_categorical(&mut rng, &theta);
                    debug_assert!(z < k);
                    for (i, c) in column.iter_mut().enumerate() {
                        *c = lda.beta.prob(i, z);
                    }
                    words.push(sample_categorical(&mut rng, &column) as u32);
                }
                let id = format!("{}-{:05}", source.label, si);
                segments.push(QuantizedSegment::new(
                    id,
                    Some(source.label.clone()),
                    words,
                )?);
                labels.push(source.label.clone());
                thetas.push(theta);
            }
        }
        Ok(SynthOutput {
            corpus: SynthCorpus::Quantized(QuantizedCorpus::new(vocab, segments)?),
            ground_truth: GroundTruth {
                source_labels: labels,
                theta_star: Some(thetas),
                lda_sources: Some(truths),
            },
        })
    }
}

/// Draw a topic-word matrix with each column sampled from a symmetric
/// Dirichlet with the given concentration. Small concentrations give sparse,
/// well-separated topics. Deterministic in `seed`.
pub fn random_topic_matrix(v: usize, k: usize, concentration: f64, seed: u64) -> TopicMatrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let alpha = vec![concentration; v];
    let mut probs = vec![0.0; v * k];
    for topic in 0..k {
        let col = sample_dirichlet(&mut rng, &alpha);
        for (i, &p) in col.iter().enumerate() {
            probs[i * k + topic] = p;
        }
    }
    TopicMatrix { v, k, probs }
}
