//! Unsupervised discovery of latent acoustic domains in segmented feature data.
//!
//! The pipeline quantizes continuous feature frames into discrete acoustic
//! words with an EM-trained codebook, fits an LDA topic model over the
//! resulting word sequences with variational EM, assigns each segment to its
//! most probable latent domain, and scores domain consistency between data
//! sets with a smoothed KL divergence.
//!
//! Modules map onto pipeline stages:
//!
//! - [`corpus`]: segment/corpus containers and stratified splitting
//! - [`synth`]: seeded synthetic corpus generators for multi-domain data
//! - [`io`]: binary and text file formats for corpora, codebooks and models
//! - [`codebook`]: acoustic-word codebook training and frame quantization
//! - [`lda`]: variational-EM topic model estimation and posterior inference
//! - [`manifest`]: segment-to-domain assignment manifests
//! - [`metrics`]: domain-distribution tables, smoothed KL divergence,
//!   topic matching against ground truth

pub mod codebook;
pub mod corpus;
pub mod io;
pub mod lda;
pub mod manifest;
pub mod metrics;
pub mod special;
pub mod synth;

pub use codebook::{train_codebook, Codebook, VqTrainConfig, VqTrainReport};
pub use corpus::{Corpus, FeatureCorpus, FeatureSegment, QuantizedCorpus, QuantizedSegment};
pub use lda::{
    assign_domain, corpus_elbo, e_step_segment, exact_marginal_log_likelihood, infer, train,
    AlphaMode, EStepParams, LdaModel, LdaTrainConfig, SegmentPosterior, TopicMatrix,
};
pub use manifest::DomainManifest;
pub use metrics::{domain_distribution, kl_divergence, label_domain_table, match_topics, smooth};
pub use synth::{synthesize, SynthSpec};
