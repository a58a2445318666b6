//! Acoustic-word codebook: EM training with mix-up growth and frame
//! quantization.
//!
//! Training runs hard-assignment EM (identity covariance makes the
//! responsibility argmax a Euclidean argmin, so this is plain k-means /
//! LBG) and doubles the codebook by perturbing every mean until the target
//! size is reached. Quantization maps a frame to the index of the nearest
//! mean, ties going to the lowest index.
//!
//! When per-dimension z-normalization is enabled (the default) the shift
//! and scale are stored in the codebook and applied to every frame before
//! distance computation, so quantization always happens in the space the
//! codebook was trained in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{FeatureCorpus, QuantizedCorpus, QuantizedSegment};

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{frames} frame(s) cannot support a codebook of size {target}")]
    InsufficientData { frames: usize, target: u32 },
    #[error("frame dimension {got} does not match codebook dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid codebook data: {0}")]
    InvalidData(String),
}

/// Per-dimension affine transform applied to frames before distance
/// computation: `x' = (x - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Mix-up training parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VqTrainConfig {
    /// Final codebook size; must be a power of two.
    pub target_v: u32,
    /// Iteration cap for EM at each mix-up level.
    pub em_iters_per_level: usize,
    /// Mean-perturbation magnitude for the mix-up split, in units of the
    /// per-dimension data standard deviation.
    pub split_epsilon: f64,
    /// Relative distortion-change threshold ending a level early.
    pub convergence_tol: f64,
    /// Apply per-dimension z-normalization before training (recorded in the
    /// codebook so quantization matches).
    pub normalize: bool,
    pub seed: u64,
}

impl Default for VqTrainConfig {
    fn default() -> Self {
        Self {
            target_v: 2048,
            em_iters_per_level: 20,
            split_epsilon: 0.05,
            convergence_tol: 1e-5,
            normalize: true,
            seed: 0,
        }
    }
}

impl VqTrainConfig {
    pub fn validate(&self) -> Result<(), CodebookError> {
        if !self.target_v.is_power_of_two() {
            return Err(CodebookError::InvalidConfig(format!(
                "target_v must be a power of two, got {}",
                self.target_v
            )));
        }
        if self.em_iters_per_level == 0 {
            return Err(CodebookError::InvalidConfig(
                "em_iters_per_level must be positive".into(),
            ));
        }
        if !self.split_epsilon.is_finite() || self.split_epsilon <= 0.0 {
            return Err(CodebookError::InvalidConfig(format!(
                "split_epsilon must be a positive real, got {}",
                self.split_epsilon
            )));
        }
        if !self.convergence_tol.is_finite() || self.convergence_tol <= 0.0 {
            return Err(CodebookError::InvalidConfig(format!(
                "convergence_tol must be a positive real, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// The acoustic-word dictionary: `V` mean vectors of dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    v: u32,
    dim: usize,
    /// Row-major `V × n`.
    means: Vec<f32>,
    norm: Option<Normalization>,
    training_distortion: f64,
}

impl Codebook {
    pub fn from_parts(
        v: u32,
        dim: usize,
        means: Vec<f32>,
        norm: Option<Normalization>,
        training_distortion: f64,
    ) -> Result<Self, CodebookError> {
        if v == 0 || dim == 0 {
            return Err(CodebookError::InvalidData(
                "codebook size and dimension must be at least 1".into(),
            ));
        }
        if means.len() != v as usize * dim {
            return Err(CodebookError::InvalidData(format!(
                "expected {}x{} means, got {} values",
                v,
                dim,
                means.len()
            )));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(CodebookError::InvalidData("non-finite mean".into()));
        }
        if let Some(n) = &norm {
            if n.shift.len() != dim || n.scale.len() != dim {
                return Err(CodebookError::InvalidData(
                    "normalization vectors do not match dimension".into(),
                ));
            }
            if n.scale.iter().any(|&s| !s.is_finite() || s <= 0.0)
                || n.shift.iter().any(|s| !s.is_finite())
            {
                return Err(CodebookError::InvalidData(
                    "normalization entries must be finite, scales positive".into(),
                ));
            }
        }
        Ok(Self {
            v,
            dim,
            means,
            norm,
            training_distortion,
        })
    }

    pub fn v(&self) -> u32 {
        self.v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major `V × n` mean matrix (in the normalized space when a
    /// normalization is present).
    pub fn means(&self) -> &[f32] {
        &self.means
    }

    pub fn mean(&self, j: usize) -> &[f32] {
        &self.means[j * self.dim..(j + 1) * self.dim]
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.norm.as_ref()
    }

    /// Mean squared distance over the training frames at the end of training.
    pub fn training_distortion(&self) -> f64 {
        self.training_distortion
    }

    fn normalize_into(&self, frame: &[f32], out: &mut [f64]) {
        match &self.norm {
            Some(n) => {
                for d in 0..self.dim {
                    out[d] = (frame[d] as f64 - n.shift[d]) / n.scale[d];
                }
            }
            None => {
                for d in 0..self.dim {
                    out[d] = frame[d] as f64;
                }
            }
        }
    }

    /// Index of the nearest mean; exact ties break to the lowest index.
    pub fn quantize_frame(&self, frame: &[f32]) -> Result<u32, CodebookError> {
        if frame.len() != self.dim {
            return Err(CodebookError::DimensionMismatch {
                expected: self.dim,
                got: frame.len(),
            });
        }
        let mut scratch = vec![0.0f64; self.dim];
        self.normalize_into(frame, &mut scratch);
        Ok(nearest(&scratch, &self.means, self.dim).0)
    }

    /// Quantize every segment; word counts equal frame counts, ids and
    /// labels carry over.
    pub fn quantize_corpus(
        &self,
        corpus: &FeatureCorpus,
    ) -> Result<QuantizedCorpus, CodebookError> {
        if corpus.dim() != self.dim {
            return Err(CodebookError::DimensionMismatch {
                expected: self.dim,
                got: corpus.dim(),
            });
        }
        let mut scratch = vec![0.0f64; self.dim];
        let mut segments = Vec::with_capacity(corpus.segments().len());
        for seg in corpus.segments() {
            let mut words = Vec::with_capacity(seg.num_frames());
            for t in 0..seg.num_frames() {
                self.normalize_into(seg.frame(t), &mut scratch);
                words.push(nearest(&scratch, &self.means, self.dim).0);
            }
            segments.push(
                QuantizedSegment::new(seg.id(), seg.source_label().map(String::from), words)
                    .expect("frame count >= 1"),
            );
        }
        Ok(QuantizedCorpus::new(self.v, segments).expect("ids unique, words bounded"))
    }

    /// Mean squared distance between each frame and its assigned mean.
    pub fn distortion(&self, corpus: &FeatureCorpus) -> Result<f64, CodebookError> {
        if corpus.dim() != self.dim {
            return Err(CodebookError::DimensionMismatch {
                expected: self.dim,
                got: corpus.dim(),
            });
        }
        let mut scratch = vec![0.0f64; self.dim];
        let mut total = 0.0f64;
        let mut count = 0usize;
        for seg in corpus.segments() {
            for t in 0..seg.num_frames() {
                self.normalize_into(seg.frame(t), &mut scratch);
                total += nearest(&scratch, &self.means, self.dim).1;
                count += 1;
            }
        }
        Ok(total / count as f64)
    }
}

/// Distortion trace for one mix-up level: the assignment-step mean squared
/// distance of every EM iteration, in order.
#[derive(Debug, Clone)]
pub struct VqLevelTrace {
    pub v: u32,
    pub distortions: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct VqTrainReport {
    pub levels: Vec<VqLevelTrace>,
    /// Hard assignment of every pooled training frame under the final means,
    /// in corpus frame order.
    pub final_assignments: Vec<u32>,
}

fn nearest(frame: &[f64], means: &[f32], dim: usize) -> (u32, f64) {
    let mut best = f64::INFINITY;
    let mut best_j = 0u32;
    for (j, mean) in means.chunks_exact(dim).enumerate() {
        let mut acc = 0.0f64;
        for d in 0..dim {
            let t = frame[d] - mean[d] as f64;
            acc += t * t;
        }
        if acc < best {
            best = acc;
            best_j = j as u32;
        }
    }
    (best_j, best)
}

struct AssignState {
    assignments: Vec<u32>,
    dists: Vec<f64>,
    sums: Vec<f64>,
    counts: Vec<usize>,
    mean_sq_dist: f64,
}

fn assign_pass(buffer: &[f64], dim: usize, means: &[f32]) -> AssignState {
    let v = means.len() / dim;
    let n = buffer.len() / dim;
    let mut state = AssignState {
        assignments: vec![0u32; n],
        dists: vec![0.0; n],
        sums: vec![0.0; v * dim],
        counts: vec![0usize; v],
        mean_sq_dist: 0.0,
    };
    let mut total = 0.0f64;
    for (fi, frame) in buffer.chunks_exact(dim).enumerate() {
        let (j, d2) = nearest(frame, means, dim);
        state.assignments[fi] = j;
        state.dists[fi] = d2;
        total += d2;
        let js = j as usize * dim;
        for (sum, &x) in state.sums[js..js + dim].iter_mut().zip(frame) {
            *sum += x;
        }
        state.counts[j as usize] += 1;
    }
    state.mean_sq_dist = total / n as f64;
    state
}

/// Re-seed every empty cluster with the frame worst represented by its
/// current mean. Standard LBG repair; keeps the component count exact.
fn repair_empty_clusters(buffer: &[f64], dim: usize, means: &mut [f32], state: &mut AssignState) {
    let v = means.len() / dim;
    loop {
        let Some(empty) = state.counts.iter().position(|&c| c == 0) else {
            return;
        };
        debug_assert!(empty < v);
        // Donor: farthest frame whose cluster keeps at least one member.
        let mut donor: Option<usize> = None;
        let mut donor_dist = f64::NEG_INFINITY;
        for fi in 0..state.assignments.len() {
            if state.counts[state.assignments[fi] as usize] > 1 && state.dists[fi] > donor_dist {
                donor = Some(fi);
                donor_dist = state.dists[fi];
            }
        }
        let fi = donor.expect("frame count >= V guarantees a multi-member cluster");
        let frame = &buffer[fi * dim..(fi + 1) * dim];
        let old = state.assignments[fi] as usize;
        state.counts[old] -= 1;
        for d in 0..dim {
            state.sums[old * dim + d] -= frame[d];
            state.sums[empty * dim + d] += frame[d];
            means[empty * dim + d] = frame[d] as f32;
        }
        state.counts[empty] = 1;
        state.assignments[fi] = empty as u32;
        state.dists[fi] = 0.0;
    }
}

/// Train a codebook of `config.target_v` means on the pooled frames of
/// `corpus`.
///
/// Starts from the global mean and alternates EM-to-convergence with a
/// mix-up split of every mean by `±split_epsilon · s` per dimension (`s`
/// being the data standard deviation) until the target size is reached.
/// Deterministic for a given config.
pub fn train_codebook(
    corpus: &FeatureCorpus,
    config: &VqTrainConfig,
) -> Result<(Codebook, VqTrainReport), CodebookError> {
    config.validate()?;
    let dim = corpus.dim();
    let n_frames = corpus.total_frames();
    if n_frames < config.target_v as usize {
        return Err(CodebookError::InsufficientData {
            frames: n_frames,
            target: config.target_v,
        });
    }

    // Per-dimension moments over the pooled frames.
    let mut mean = vec![0.0f64; dim];
    for seg in corpus.segments() {
        for frame in seg.frames().chunks_exact(dim) {
            for d in 0..dim {
                mean[d] += frame[d] as f64;
            }
        }
    }
    for m in &mut mean {
        *m /= n_frames as f64;
    }
    let mut var = vec![0.0f64; dim];
    for seg in corpus.segments() {
        for frame in seg.frames().chunks_exact(dim) {
            for d in 0..dim {
                let t = frame[d] as f64 - mean[d];
                var[d] += t * t;
            }
        }
    }
    let std: Vec<f64> = var.iter().map(|&v| (v / n_frames as f64).sqrt()).collect();

    let norm = if config.normalize {
        Some(Normalization {
            shift: mean.clone(),
            // constant dimensions keep unit scale
            scale: std.iter().map(|&s| if s > 0.0 { s } else { 1.0 }).collect(),
        })
    } else {
        None
    };

    // Training buffer in the quantization space.
    let mut buffer = Vec::with_capacity(n_frames * dim);
    for seg in corpus.segments() {
        for frame in seg.frames().chunks_exact(dim) {
            match &norm {
                Some(n) => {
                    for ((&x, &shift), &scale) in frame.iter().zip(&n.shift).zip(&n.scale) {
                        buffer.push((x as f64 - shift) / scale);
                    }
                }
                None => buffer.extend(frame.iter().map(|&x| x as f64)),
            }
        }
    }
    // Split direction: std of the buffer itself (all ones under
    // normalization, the raw data std otherwise).
    let split_std: Vec<f64> = match &norm {
        Some(_) => {
            let mut bmean = vec![0.0f64; dim];
            for frame in buffer.chunks_exact(dim) {
                for d in 0..dim {
                    bmean[d] += frame[d];
                }
            }
            for m in &mut bmean {
                *m /= n_frames as f64;
            }
            let mut bvar = vec![0.0f64; dim];
            for frame in buffer.chunks_exact(dim) {
                for d in 0..dim {
                    let t = frame[d] - bmean[d];
                    bvar[d] += t * t;
                }
            }
            bvar.iter().map(|&v| (v / n_frames as f64).sqrt()).collect()
        }
        None => std.clone(),
    };

    // Level V=1: the global mean of the buffer.
    let mut means: Vec<f32> = {
        let mut m = vec![0.0f64; dim];
        for frame in buffer.chunks_exact(dim) {
            for d in 0..dim {
                m[d] += frame[d];
            }
        }
        m.iter().map(|&x| (x / n_frames as f64) as f32).collect()
    };

    let mut report = VqTrainReport {
        levels: Vec::new(),
        final_assignments: Vec::new(),
    };
    loop {
        let cur_v = (means.len() / dim) as u32;
        let mut distortions = Vec::new();
        let mut prev = f64::INFINITY;
        for _ in 0..config.em_iters_per_level {
            let mut state = assign_pass(&buffer, dim, &means);
            let d = state.mean_sq_dist;
            distortions.push(d);
            if prev.is_finite() {
                let rel = if prev > 0.0 {
                    (prev - d).abs() / prev
                } else {
                    0.0
                };
                if rel < config.convergence_tol {
                    break;
                }
            }
            prev = d;
            repair_empty_clusters(&buffer, dim, &mut means, &mut state);
            for j in 0..cur_v as usize {
                let c = state.counts[j] as f64;
                for d in 0..dim {
                    means[j * dim + d] = (state.sums[j * dim + d] / c) as f32;
                }
            }
        }
        report.levels.push(VqLevelTrace {
            v: cur_v,
            distortions,
        });
        if cur_v >= config.target_v {
            break;
        }
        // Mix-up: every mean splits into m + eps*s and m - eps*s.
        let mut doubled = Vec::with_capacity(means.len() * 2);
        for mean in means.chunks_exact(dim) {
            for d in 0..dim {
                doubled.push((mean[d] as f64 + config.split_epsilon * split_std[d]) as f32);
            }
            for d in 0..dim {
                doubled.push((mean[d] as f64 - config.split_epsilon * split_std[d]) as f32);
            }
        }
        means = doubled;
    }

    // Final hard assignment under the final means; this is exactly what
    // quantize_frame computes.
    let final_state = assign_pass(&buffer, dim, &means);
    report.final_assignments = final_state.assignments;
    let codebook =
        Codebook::from_parts(config.target_v, dim, means, norm, final_state.mean_sq_dist)?;
    Ok((codebook, report))
}
