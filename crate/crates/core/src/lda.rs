//! Topic-model estimation over quantized corpora by variational EM,
//! posterior inference, and domain assignment.
//!
//! The model is the standard one: a segment draws topic weights θ from
//! Dir(α), every word draws a topic z from θ and then a word id from the
//! topic's column of β. The posterior over (θ, z) is intractable, so each
//! segment gets a factorized surrogate q(θ|γ) ∏ q(z_n|φ_n) fitted by
//! coordinate ascent on the evidence lower bound:
//!
//! ```text
//! φ_nk ∝ β[w_n][k] · exp(Ψ(γ_k)),      γ_k = α_k + Σ_n φ_nk
//! ```
//!
//! Training alternates that E-step over all segments with an M-step that
//! re-estimates β from the expected word-topic counts (plus an additive
//! smoothing η that keeps log β finite for words unseen under a topic) and
//! optionally re-fits a symmetric α by Newton's method. All β / φ
//! arithmetic runs in log space.
//!
//! [`exact_marginal_log_likelihood`] computes the true segment marginal by
//! brute-force enumeration of topic assignments on instances small enough
//! to afford it; the bound produced by the E-step can never exceed it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{QuantizedCorpus, QuantizedSegment};
use crate::special::{digamma, ln_gamma, log_sum_exp, trigamma};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("segment `{segment_id}`: word {word} is outside the model vocabulary ({vocab})")]
    WordOutOfVocab {
        segment_id: String,
        word: u32,
        vocab: usize,
    },
    #[error("non-finite {context} at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        context: &'static str,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("posterior/corpus mismatch: {0}")]
    Misaligned(String),
    #[error("exact enumeration needs K^N <= {limit:e}, got {combos:e}")]
    InstanceTooLarge { combos: f64, limit: f64 },
}

/// Topic-word probabilities in linear space, row-major `V × K`; every topic
/// column sums to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMatrix {
    pub v: usize,
    pub k: usize,
    pub probs: Vec<f64>,
}

impl TopicMatrix {
    pub fn prob(&self, word: usize, topic: usize) -> f64 {
        self.probs[word * self.k + topic]
    }

    pub fn column(&self, topic: usize) -> Vec<f64> {
        (0..self.v).map(|i| self.prob(i, topic)).collect()
    }
}

/// Estimated model: Dirichlet parameter α (length K) and log topic-word
/// matrix (row-major `V × K`, each column a log-probability distribution).
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    k: usize,
    v: usize,
    alpha: Vec<f64>,
    log_beta: Vec<f64>,
}

impl LdaModel {
    /// Validates shapes, positive finite α, and column normalization of β
    /// within 1e-9. `-inf` log-probabilities are allowed (exact zeros under
    /// an unsmoothed M-step); NaN and +inf are not.
    pub fn new(k: usize, v: usize, alpha: Vec<f64>, log_beta: Vec<f64>) -> Result<Self, LdaError> {
        if k == 0 || v == 0 {
            return Err(LdaError::InvalidModel("K and V must be at least 1".into()));
        }
        if alpha.len() != k {
            return Err(LdaError::InvalidModel(format!(
                "alpha length {} does not match K={k}",
                alpha.len()
            )));
        }
        if alpha.iter().any(|&a| !a.is_finite() || a <= 0.0) {
            return Err(LdaError::InvalidModel(
                "alpha entries must be positive and finite".into(),
            ));
        }
        if log_beta.len() != v * k {
            return Err(LdaError::InvalidModel(format!(
                "log_beta length {} does not match V*K={}",
                log_beta.len(),
                v * k
            )));
        }
        if log_beta.iter().any(|&b| b.is_nan() || b == f64::INFINITY) {
            return Err(LdaError::InvalidModel(
                "log_beta entries must not be NaN or +inf".into(),
            ));
        }
        for topic in 0..k {
            let sum: f64 = (0..v).map(|i| log_beta[i * k + topic].exp()).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(LdaError::InvalidModel(format!(
                    "beta column {topic} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self {
            k,
            v,
            alpha,
            log_beta,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.v
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Row-major `V × K` log-probabilities.
    pub fn log_beta(&self) -> &[f64] {
        &self.log_beta
    }

    pub fn beta_matrix(&self) -> TopicMatrix {
        TopicMatrix {
            v: self.v,
            k: self.k,
            probs: self.log_beta.iter().map(|&b| b.exp()).collect(),
        }
    }
}

/// Variational posterior for one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPosterior {
    /// Dirichlet parameter, length K; Σγ = Σα + N.
    pub gamma: Vec<f64>,
    /// Per-word topic multinomials, row-major `N × K`; rows sum to 1.
    pub phi: Vec<f64>,
    /// Converged evidence lower bound for the segment.
    pub elbo: f64,
}

impl SegmentPosterior {
    pub fn num_words(&self) -> usize {
        self.phi.len() / self.gamma.len()
    }
}

/// How the Dirichlet parameter is handled during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// Keep α fixed at the given symmetric value.
    Fixed { value: f64 },
    /// Re-estimate a symmetric α by Newton's method each EM iteration,
    /// starting from `init`.
    Newton { init: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EStepParams {
    pub max_iters: usize,
    /// Convergence threshold on mean |Δγ| between iterations.
    pub converge_tol: f64,
}

impl Default for EStepParams {
    fn default() -> Self {
        Self {
            max_iters: 100,
            converge_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaTrainConfig {
    pub k: usize,
    pub max_em_iters: usize,
    /// Convergence threshold on the relative corpus-ELBO change.
    pub em_converge_tol: f64,
    pub estep_max_iters: usize,
    pub estep_converge_tol: f64,
    pub alpha_mode: AlphaMode,
    /// Additive smoothing inside the β M-step.
    pub beta_smoothing_eta: f64,
    pub seed: u64,
}

impl Default for LdaTrainConfig {
    fn default() -> Self {
        Self {
            k: 8,
            max_em_iters: 100,
            em_converge_tol: 1e-5,
            estep_max_iters: 100,
            estep_converge_tol: 1e-4,
            alpha_mode: AlphaMode::Newton { init: 1.0 },
            beta_smoothing_eta: 1e-6,
            seed: 0,
        }
    }
}

impl LdaTrainConfig {
    pub fn validate(&self) -> Result<(), LdaError> {
        if self.k == 0 {
            return Err(LdaError::InvalidConfig("K must be at least 1".into()));
        }
        if self.max_em_iters == 0 || self.estep_max_iters == 0 {
            return Err(LdaError::InvalidConfig(
                "iteration caps must be positive".into(),
            ));
        }
        for (name, v) in [
            ("em_converge_tol", self.em_converge_tol),
            ("estep_converge_tol", self.estep_converge_tol),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(LdaError::InvalidConfig(format!(
                    "{name} must be a positive real, got {v}"
                )));
            }
        }
        if !self.beta_smoothing_eta.is_finite() || self.beta_smoothing_eta < 0.0 {
            return Err(LdaError::InvalidConfig(format!(
                "beta_smoothing_eta must be >= 0, got {}",
                self.beta_smoothing_eta
            )));
        }
        match self.alpha_mode {
            AlphaMode::Fixed { value } | AlphaMode::Newton { init: value } => {
                if !value.is_finite() || value <= 0.0 {
                    return Err(LdaError::InvalidConfig(format!(
                        "alpha must be a positive real, got {value}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn estep_params(&self) -> EStepParams {
        EStepParams {
            max_iters: self.estep_max_iters,
            converge_tol: self.estep_converge_tol,
        }
    }
}

/// Unique words of a segment with their counts, in first-appearance order.
struct WordBag {
    unique: Vec<(u32, f64)>,
    n: usize,
}

impl WordBag {
    fn from_words(words: &[u32]) -> Self {
        let mut index = std::collections::HashMap::new();
        let mut unique: Vec<(u32, f64)> = Vec::new();
        for &w in words {
            match index.get(&w) {
                Some(&u) => unique[u as usize].1 += 1.0,
                None => {
                    index.insert(w, unique.len() as u32);
                    unique.push((w, 1.0));
                }
            }
        }
        Self {
            unique,
            n: words.len(),
        }
    }
}

/// Segment bound at the given variational state. `phi` is unique-word-major
/// and parallel to `bag.unique`.
fn segment_bound(bag: &WordBag, model: &LdaModel, gamma: &[f64], phi: &[f64]) -> f64 {
    let k = model.k;
    let sum_alpha: f64 = model.alpha.iter().sum();
    let sum_gamma: f64 = gamma.iter().sum();
    let dig_sum = digamma(sum_gamma);
    let mut bound = ln_gamma(sum_alpha) - ln_gamma(sum_gamma);
    for (&g, &a) in gamma.iter().zip(&model.alpha) {
        let elog = digamma(g) - dig_sum;
        bound += -ln_gamma(a) + (a - 1.0) * elog;
        bound += ln_gamma(g) - (g - 1.0) * elog;
    }
    for (u, &(word, count)) in bag.unique.iter().enumerate() {
        let lb = &model.log_beta[word as usize * k..word as usize * k + k];
        let row = &phi[u * k..(u + 1) * k];
        for j in 0..k {
            let p = row[j];
            if p > 0.0 {
                let elog = digamma(gamma[j]) - dig_sum;
                bound += count * p * (elog + lb[j] - p.ln());
            }
        }
    }
    bound
}

struct EStepResult {
    gamma: Vec<f64>,
    /// Unique-word-major `U × K`.
    phi_unique: Vec<f64>,
    elbo: f64,
}

fn e_step_core(
    bag: &WordBag,
    model: &LdaModel,
    params: &EStepParams,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<EStepResult, LdaError> {
    let k = model.k;
    let n = bag.n as f64;
    let u_count = bag.unique.len();
    let mut gamma: Vec<f64> = model.alpha.iter().map(|&a| a + n / k as f64).collect();
    let mut phi = vec![0.0f64; u_count * k];
    let mut dig = vec![0.0f64; k];
    let mut logrow = vec![0.0f64; k];
    let mut elbo = f64::NEG_INFINITY;
    for iter in 0..params.max_iters {
        for j in 0..k {
            dig[j] = digamma(gamma[j]);
        }
        for (u, &(word, _)) in bag.unique.iter().enumerate() {
            let lb = &model.log_beta[word as usize * k..word as usize * k + k];
            for j in 0..k {
                logrow[j] = dig[j] + lb[j];
            }
            let lse = log_sum_exp(&logrow);
            if !lse.is_finite() {
                return Err(LdaError::NonFinite {
                    iteration: iter,
                    context: "phi normalizer",
                });
            }
            for j in 0..k {
                phi[u * k + j] = (logrow[j] - lse).exp();
            }
        }
        let mut delta = 0.0f64;
        for j in 0..k {
            let mut acc = model.alpha[j];
            for (u, &(_, count)) in bag.unique.iter().enumerate() {
                acc += count * phi[u * k + j];
            }
            delta += (acc - gamma[j]).abs();
            gamma[j] = acc;
        }
        delta /= k as f64;
        if gamma.iter().any(|g| !g.is_finite()) || !delta.is_finite() {
            return Err(LdaError::NonFinite {
                iteration: iter,
                context: "gamma update",
            });
        }
        if let Some(t) = trace.as_deref_mut() {
            elbo = segment_bound(bag, model, &gamma, &phi);
            if elbo.is_nan() {
                return Err(LdaError::NonFinite {
                    iteration: iter,
                    context: "segment bound",
                });
            }
            t.push(elbo);
        }
        if delta < params.converge_tol {
            break;
        }
    }
    if trace.is_none() {
        elbo = segment_bound(bag, model, &gamma, &phi);
        if elbo.is_nan() {
            return Err(LdaError::NonFinite {
                iteration: params.max_iters,
                context: "segment bound",
            });
        }
    }
    Ok(EStepResult {
        gamma,
        phi_unique: phi,
        elbo,
    })
}

fn check_vocab(segment: &QuantizedSegment, model: &LdaModel) -> Result<(), LdaError> {
    if let Some(&w) = segment.words().iter().find(|&&w| w as usize >= model.v) {
        return Err(LdaError::WordOutOfVocab {
            segment_id: segment.id().to_string(),
            word: w,
            vocab: model.v,
        });
    }
    Ok(())
}

fn expand_posterior(
    bag: &WordBag,
    words: &[u32],
    result: EStepResult,
    k: usize,
) -> SegmentPosterior {
    let mut index = std::collections::HashMap::new();
    for (u, &(word, _)) in bag.unique.iter().enumerate() {
        index.insert(word, u);
    }
    let mut phi = Vec::with_capacity(words.len() * k);
    for &w in words {
        let u = index[&w];
        phi.extend_from_slice(&result.phi_unique[u * k..(u + 1) * k]);
    }
    SegmentPosterior {
        gamma: result.gamma,
        phi,
        elbo: result.elbo,
    }
}

/// Fit the variational posterior of one segment under a frozen model.
pub fn e_step_segment(
    segment: &QuantizedSegment,
    model: &LdaModel,
    params: &EStepParams,
) -> Result<SegmentPosterior, LdaError> {
    check_vocab(segment, model)?;
    let bag = WordBag::from_words(segment.words());
    let result = e_step_core(&bag, model, params, None)?;
    Ok(expand_posterior(&bag, segment.words(), result, model.k))
}

/// Like [`e_step_segment`], additionally returning the bound after every
/// coordinate-ascent iteration.
pub fn e_step_segment_traced(
    segment: &QuantizedSegment,
    model: &LdaModel,
    params: &EStepParams,
) -> Result<(SegmentPosterior, Vec<f64>), LdaError> {
    check_vocab(segment, model)?;
    let bag = WordBag::from_words(segment.words());
    let mut trace = Vec::new();
    let result = e_step_core(&bag, model, params, Some(&mut trace))?;
    Ok((
        expand_posterior(&bag, segment.words(), result, model.k),
        trace,
    ))
}

/// Posterior inference for every segment under a frozen model, in corpus
/// order.
pub fn infer(
    corpus: &QuantizedCorpus,
    model: &LdaModel,
    params: &EStepParams,
) -> Result<Vec<SegmentPosterior>, LdaError> {
    corpus
        .segments()
        .iter()
        .map(|seg| e_step_segment(seg, model, params))
        .collect()
}

/// The segment's domain: index of the largest γ entry, lowest index on
/// exact ties.
pub fn assign_domain(posterior: &SegmentPosterior) -> usize {
    let mut best = 0usize;
    for (j, &g) in posterior.gamma.iter().enumerate() {
        if g > posterior.gamma[best] {
            best = j;
        }
    }
    best
}

/// Corpus-level bound: the sum of per-segment bounds recomputed from the
/// supplied posteriors.
pub fn corpus_elbo(
    corpus: &QuantizedCorpus,
    model: &LdaModel,
    posteriors: &[SegmentPosterior],
) -> Result<f64, LdaError> {
    if corpus.segments().len() != posteriors.len() {
        return Err(LdaError::Misaligned(format!(
            "{} segments vs {} posteriors",
            corpus.segments().len(),
            posteriors.len()
        )));
    }
    let k = model.k;
    let mut total = 0.0;
    for (seg, post) in corpus.segments().iter().zip(posteriors) {
        check_vocab(seg, model)?;
        if post.gamma.len() != k || post.phi.len() != seg.len() * k {
            return Err(LdaError::Misaligned(format!(
                "segment `{}`: posterior shape ({}, {}) does not match (K={}, N={})",
                seg.id(),
                post.gamma.len(),
                post.phi.len(),
                k,
                seg.len()
            )));
        }
        // token-major phi: every token is its own "unique" word here
        let bag = WordBag {
            unique: seg.words().iter().map(|&w| (w, 1.0)).collect(),
            n: seg.len(),
        };
        total += segment_bound(&bag, model, &post.gamma, &post.phi);
    }
    Ok(total)
}

/// Exact log p(w | α, β) by summing over all K^N topic assignments.
///
/// This is the enumeration oracle the variational bound is checked against;
/// instances are capped at 10^6 assignments.
pub fn exact_marginal_log_likelihood(
    segment: &QuantizedSegment,
    model: &LdaModel,
) -> Result<f64, LdaError> {
    const LIMIT: f64 = 1e6;
    check_vocab(segment, model)?;
    let k = model.k;
    let n = segment.len();
    let combos = (k as f64).powi(n as i32);
    if combos.is_nan() || combos > LIMIT {
        return Err(LdaError::InstanceTooLarge {
            combos,
            limit: LIMIT,
        });
    }
    let sum_alpha: f64 = model.alpha.iter().sum();
    let base = ln_gamma(sum_alpha) - ln_gamma(sum_alpha + n as f64);
    // lg_table[j][c] = ln Γ(α_j + c) − ln Γ(α_j)
    let lg_table: Vec<Vec<f64>> = model
        .alpha
        .iter()
        .map(|&a| {
            (0..=n)
                .map(|c| ln_gamma(a + c as f64) - ln_gamma(a))
                .collect()
        })
        .collect();
    let words = segment.words();
    let mut assignment = vec![0usize; n];
    let mut counts = vec![0usize; k];
    let mut terms = Vec::with_capacity(combos as usize);
    loop {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut word_part = 0.0f64;
        for (pos, &z) in assignment.iter().enumerate() {
            word_part += model.log_beta[words[pos] as usize * k + z];
            counts[z] += 1;
        }
        let mut dir_part = base;
        for j in 0..k {
            dir_part += lg_table[j][counts[j]];
        }
        terms.push(word_part + dir_part);
        // odometer increment over {0..K}^N
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(log_sum_exp(&terms));
            }
            assignment[pos] += 1;
            if assignment[pos] < k {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}

/// Per-iteration training diagnostics.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Corpus bound after the E-step of every EM iteration.
    pub corpus_elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl TrainReport {
    pub fn final_elbo(&self) -> f64 {
        *self
            .corpus_elbo_trace
            .last()
            .expect("training runs at least one iteration")
    }
}

/// Maximize `f(a) = M·(lnΓ(Ka) − K·lnΓ(a)) + (a − 1)·s` over a > 0 by
/// Newton's method in log a. Falls back to the initial value if the search
/// fails to improve the objective, so EM monotonicity is preserved.
fn optimize_symmetric_alpha(init: f64, k: usize, m: usize, s: f64) -> f64 {
    let (kf, mf) = (k as f64, m as f64);
    let f = |a: f64| mf * (ln_gamma(kf * a) - kf * ln_gamma(a)) + (a - 1.0) * s;
    let df = |a: f64| mf * kf * (digamma(kf * a) - digamma(a)) + s;
    let d2f = |a: f64| mf * kf * (kf * trigamma(kf * a) - trigamma(a));
    let mut log_a = init.ln();
    for _ in 0..100 {
        let a = log_a.exp().clamp(1e-10, 1e10);
        let d = df(a);
        if !d.is_finite() || d.abs() < 1e-9 * mf.max(1.0) {
            break;
        }
        let step = d / (d2f(a) * a + d);
        if !step.is_finite() {
            break;
        }
        log_a -= step;
        if !log_a.is_finite() {
            return init;
        }
    }
    let a = log_a.exp().clamp(1e-10, 1e10);
    if f(a).is_finite() && f(a) >= f(init) {
        a
    } else {
        init
    }
}

/// Estimate a model on a quantized corpus by variational EM.
///
/// Each iteration runs the E-step over every segment, records the corpus
/// bound, and unless converged re-estimates β (and α per `alpha_mode`). The
/// loop always ends on an E-step, so the recorded final bound belongs to
/// the returned model. Deterministic for a given config.
pub fn train(
    corpus: &QuantizedCorpus,
    config: &LdaTrainConfig,
) -> Result<(LdaModel, TrainReport), LdaError> {
    config.validate()?;
    let k = config.k;
    let v = corpus.vocab_size() as usize;
    let estep = config.estep_params();
    let bags: Vec<WordBag> = corpus
        .segments()
        .iter()
        .map(|seg| WordBag::from_words(seg.words()))
        .collect();

    // β init: per-column uniform plus a small positive seeded jitter
    // (exactly uniform is a saddle point).
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut log_beta = vec![0.0f64; v * k];
    for topic in 0..k {
        let mut col = Vec::with_capacity(v);
        for _ in 0..v {
            let u: f64 = rng.random();
            col.push(1.0 / v as f64 + u * 1e-2 / v as f64);
        }
        let total: f64 = col.iter().sum();
        for (i, &c) in col.iter().enumerate() {
            log_beta[i * k + topic] = (c / total).ln();
        }
    }
    let alpha_value = match config.alpha_mode {
        AlphaMode::Fixed { value } => value,
        AlphaMode::Newton { init } => init,
    };
    let mut model = LdaModel::new(k, v, vec![alpha_value; k], log_beta)?;

    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    for em_iter in 0..config.max_em_iters {
        let mut counts = vec![0.0f64; v * k];
        let mut corpus_bound = 0.0f64;
        let mut alpha_stat = 0.0f64;
        for bag in &bags {
            let result = e_step_core(bag, &model, &estep, None)?;
            corpus_bound += result.elbo;
            for (u, &(word, count)) in bag.unique.iter().enumerate() {
                for j in 0..k {
                    counts[word as usize * k + j] += count * result.phi_unique[u * k + j];
                }
            }
            let sum_gamma: f64 = result.gamma.iter().sum();
            let dig_sum = digamma(sum_gamma);
            for j in 0..k {
                alpha_stat += digamma(result.gamma[j]) - dig_sum;
            }
        }
        if !corpus_bound.is_finite() {
            return Err(LdaError::NonFinite {
                iteration: em_iter,
                context: "corpus bound",
            });
        }
        let prev = trace.last().copied();
        trace.push(corpus_bound);
        if let Some(prev) = prev {
            if (corpus_bound - prev).abs() / prev.abs().max(1e-300) < config.em_converge_tol {
                converged = true;
                break;
            }
        }
        if em_iter + 1 == config.max_em_iters {
            break;
        }

        // M-step: β column-normalized expected counts with additive η.
        let eta = config.beta_smoothing_eta;
        let mut new_log_beta = vec![0.0f64; v * k];
        for topic in 0..k {
            let col_total: f64 = (0..v).map(|i| eta + counts[i * k + topic]).sum();
            if col_total > 0.0 {
                for i in 0..v {
                    new_log_beta[i * k + topic] =
                        (eta + counts[i * k + topic]).ln() - col_total.ln();
                }
            } else {
                // topic received no mass and η is zero: keep it uniform
                for i in 0..v {
                    new_log_beta[i * k + topic] = -(v as f64).ln();
                }
            }
        }
        let new_alpha = match config.alpha_mode {
            AlphaMode::Fixed { value } => vec![value; k],
            AlphaMode::Newton { .. } => {
                let a = optimize_symmetric_alpha(
                    model.alpha[0],
                    k,
                    corpus.segments().len(),
                    alpha_stat,
                );
                vec![a; k]
            }
        };
        model = LdaModel::new(k, v, new_alpha, new_log_beta)?;
    }
    let iterations = trace.len();
    Ok((
        model,
        TrainReport {
            corpus_elbo_trace: trace,
            iterations,
            converged,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::QuantizedSegment;

    fn model_from_beta_cols(alpha: Vec<f64>, cols: &[&[f64]]) -> LdaModel {
        let k = cols.len();
        let v = cols[0].len();
        let mut log_beta = vec![0.0; v * k];
        for (topic, col) in cols.iter().enumerate() {
            for (i, &p) in col.iter().enumerate() {
                log_beta[i * k + topic] = p.ln();
            }
        }
        LdaModel::new(k, v, alpha, log_beta).unwrap()
    }

    fn seg(words: Vec<u32>) -> QuantizedSegment {
        QuantizedSegment::new("seg", None, words).unwrap()
    }

    #[test]
    fn single_topic_posterior_is_forced() {
        let model = model_from_beta_cols(vec![0.7], &[&[0.25, 0.25, 0.5]]);
        let post = e_step_segment(&seg(vec![0, 2, 2]), &model, &EStepParams::default()).unwrap();
        assert_eq!(post.gamma, vec![0.7 + 3.0]);
        assert_eq!(post.phi, vec![1.0, 1.0, 1.0]);
        // bound equals the exact marginal: Σ log β over the words
        let want = 0.25f64.ln() + 0.5f64.ln() + 0.5f64.ln();
        assert!((post.elbo - want).abs() < 1e-12);
        let exact = exact_marginal_log_likelihood(&seg(vec![0, 2, 2]), &model).unwrap();
        assert!((exact - want).abs() < 1e-12);
    }

    #[test]
    fn uniform_beta_symmetric_alpha_gives_uniform_phi() {
        let col = vec![0.25f64; 4];
        let model = model_from_beta_cols(vec![0.3, 0.3], &[&col, &col]);
        let post = e_step_segment(&seg(vec![0, 1, 3, 3]), &model, &EStepParams::default()).unwrap();
        for row in post.phi.chunks_exact(2) {
            assert_eq!(row, &[0.5, 0.5]);
        }
        assert_eq!(post.gamma, vec![0.3 + 2.0, 0.3 + 2.0]);
    }

    #[test]
    fn gamma_sum_invariant_and_phi_rows_normalized() {
        let model = model_from_beta_cols(
            vec![0.4, 1.3, 0.9],
            &[&[0.6, 0.3, 0.1], &[0.1, 0.8, 0.1], &[0.2, 0.2, 0.6]],
        );
        let words = vec![0, 1, 2, 2, 0, 1, 1];
        let post = e_step_segment(&seg(words.clone()), &model, &EStepParams::default()).unwrap();
        let sum_gamma: f64 = post.gamma.iter().sum();
        let sum_alpha: f64 = model.alpha().iter().sum();
        assert!((sum_gamma - sum_alpha - words.len() as f64).abs() < 1e-6);
        for row in post.phi.chunks_exact(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn estep_bound_non_decreasing_and_below_exact() {
        let model = model_from_beta_cols(vec![0.2, 0.5], &[&[0.7, 0.2, 0.1], &[0.05, 0.15, 0.8]]);
        let segment = seg(vec![0, 2, 1]);
        let (post, trace) =
            e_step_segment_traced(&segment, &model, &EStepParams::default()).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * w[0].abs());
        }
        let exact = exact_marginal_log_likelihood(&segment, &model).unwrap();
        assert!(
            post.elbo <= exact + 1e-9,
            "elbo {} > exact {}",
            post.elbo,
            exact
        );
    }

    #[test]
    fn exact_marginal_single_word_closed_form() {
        let model = model_from_beta_cols(vec![0.4, 1.6], &[&[0.3, 0.3, 0.4], &[0.8, 0.1, 0.1]]);
        let got = exact_marginal_log_likelihood(&seg(vec![0]), &model).unwrap();
        let want = (0.4 / 2.0 * 0.3 + 1.6 / 2.0 * 0.8f64).ln();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn exact_marginal_rejects_huge_instances() {
        let col = vec![1.0 / 3.0; 3];
        let model = model_from_beta_cols(vec![1.0; 3], &[&col, &col, &col]);
        let words = vec![0u32; 20];
        assert!(matches!(
            exact_marginal_log_likelihood(&seg(words), &model),
            Err(LdaError::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn out_of_vocabulary_word_is_an_input_error() {
        let model = model_from_beta_cols(vec![1.0], &[&[0.5, 0.5]]);
        assert!(matches!(
            e_step_segment(&seg(vec![0, 2]), &model, &EStepParams::default()),
            Err(LdaError::WordOutOfVocab { word: 2, .. })
        ));
    }

    #[test]
    fn assign_domain_argmax_and_ties() {
        let post = SegmentPosterior {
            gamma: vec![0.2, 5.0, 1.3],
            phi: vec![],
            elbo: 0.0,
        };
        assert_eq!(assign_domain(&post), 1);
        let uniform = SegmentPosterior {
            gamma: vec![2.0, 2.0, 2.0],
            phi: vec![],
            elbo: 0.0,
        };
        assert_eq!(assign_domain(&uniform), 0);
    }

    #[test]
    fn corpus_elbo_sums_segment_bounds() {
        let model = model_from_beta_cols(vec![0.5, 0.5], &[&[0.6, 0.3, 0.1], &[0.1, 0.2, 0.7]]);
        let segs = vec![
            QuantizedSegment::new("a", None, vec![0, 1]).unwrap(),
            QuantizedSegment::new("b", None, vec![2, 2, 0]).unwrap(),
        ];
        let single = QuantizedCorpus::new(3, vec![segs[0].clone()]).unwrap();
        let both = QuantizedCorpus::new(3, segs).unwrap();
        let params = EStepParams::default();
        let p_single = infer(&single, &model, &params).unwrap();
        let p_both = infer(&both, &model, &params).unwrap();
        let single_total = corpus_elbo(&single, &model, &p_single).unwrap();
        assert!((single_total - p_single[0].elbo).abs() < 1e-9);
        let both_total = corpus_elbo(&both, &model, &p_both).unwrap();
        // adding a segment strictly decreases the total (bounds are negative)
        assert!(both_total < single_total);
        // misalignment is an error
        assert!(matches!(
            corpus_elbo(&both, &model, &p_single),
            Err(LdaError::Misaligned(_))
        ));
    }

    #[test]
    fn degenerate_corpus_concentrates_beta() {
        let segs: Vec<QuantizedSegment> = (0..5)
            .map(|i| QuantizedSegment::new(format!("s{i}"), None, vec![1]).unwrap())
            .collect();
        let corpus = QuantizedCorpus::new(3, segs).unwrap();
        let config = LdaTrainConfig {
            k: 1,
            beta_smoothing_eta: 0.0,
            alpha_mode: AlphaMode::Fixed { value: 1.0 },
            ..LdaTrainConfig::default()
        };
        let (model, _) = train(&corpus, &config).unwrap();
        let beta = model.beta_matrix();
        assert_eq!(beta.prob(1, 0), 1.0);
        assert_eq!(beta.prob(0, 0), 0.0);
        assert_eq!(beta.prob(2, 0), 0.0);
    }

    #[test]
    fn train_trace_monotone_and_deterministic() {
        // two word "themes" over V=6
        let mut segs = Vec::new();
        for i in 0..12 {
            let words: Vec<u32> = if i % 2 == 0 {
                vec![0, 1, 2, 0, 1, 0]
            } else {
                vec![3, 4, 5, 5, 4, 3]
            };
            segs.push(QuantizedSegment::new(format!("s{i}"), None, words).unwrap());
        }
        let corpus = QuantizedCorpus::new(6, segs).unwrap();
        // fixed alpha: on a perfectly balanced corpus the symmetric-alpha MLE
        // diverges, which pins topic weights uniform and stalls separation
        let config = LdaTrainConfig {
            k: 2,
            seed: 5,
            alpha_mode: AlphaMode::Fixed { value: 0.5 },
            em_converge_tol: 1e-7,
            ..LdaTrainConfig::default()
        };
        let (model_a, report_a) = train(&corpus, &config).unwrap();
        for w in report_a.corpus_elbo_trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-8 * w[0].abs(),
                "corpus bound dropped {} -> {}",
                w[0],
                w[1]
            );
        }
        let (model_b, report_b) = train(&corpus, &config).unwrap();
        assert_eq!(model_a, model_b);
        assert_eq!(report_a.corpus_elbo_trace, report_b.corpus_elbo_trace);
        // the two themes get separated topics
        let beta = model_a.beta_matrix();
        let mass_low: f64 = (0..3).map(|i| beta.prob(i, 0)).sum();
        let mass_low_other: f64 = (0..3).map(|i| beta.prob(i, 1)).sum();
        assert!((mass_low - mass_low_other).abs() > 0.5);
    }

    #[test]
    fn inference_on_training_segment_reaches_same_fixed_point() {
        let mut segs = Vec::new();
        for i in 0..8 {
            let words: Vec<u32> = if i % 2 == 0 {
                vec![0, 0, 1, 1, 0]
            } else {
                vec![2, 3, 3, 2, 2]
            };
            segs.push(QuantizedSegment::new(format!("s{i}"), None, words).unwrap());
        }
        let corpus = QuantizedCorpus::new(4, segs).unwrap();
        let config = LdaTrainConfig {
            k: 2,
            seed: 1,
            ..LdaTrainConfig::default()
        };
        let (model, _) = train(&corpus, &config).unwrap();
        let params = config.estep_params();
        let once = infer(&corpus, &model, &params).unwrap();
        let twice = infer(&corpus, &model, &params).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn label_permutation_equivariance() {
        let model = model_from_beta_cols(
            vec![0.3, 0.9, 1.5],
            &[&[0.6, 0.3, 0.1], &[0.1, 0.8, 0.1], &[0.25, 0.25, 0.5]],
        );
        // permute topics with sigma = [2, 0, 1]: new column j = old column sigma[j]
        let sigma = [2usize, 0, 1];
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|j| model.beta_matrix().column(sigma[j]))
            .collect();
        let permuted = model_from_beta_cols(
            sigma.iter().map(|&j| model.alpha()[j]).collect(),
            &cols.iter().map(|c| c.as_slice()).collect::<Vec<_>>(),
        );
        let segment = seg(vec![0, 2, 1, 1, 0]);
        let params = EStepParams::default();
        let base = e_step_segment(&segment, &model, &params).unwrap();
        let perm = e_step_segment(&segment, &permuted, &params).unwrap();
        for (j, &sj) in sigma.iter().enumerate() {
            assert!((perm.gamma[j] - base.gamma[sj]).abs() < 1e-9);
        }
        assert!((perm.elbo - base.elbo).abs() < 1e-9);
        // argmax transports through the permutation
        let base_domain = assign_domain(&base);
        let perm_domain = assign_domain(&perm);
        assert_eq!(sigma[perm_domain], base_domain);
    }

    #[test]
    fn vocabulary_permutation_invariance() {
        let model = model_from_beta_cols(vec![0.5, 0.8], &[&[0.5, 0.3, 0.2], &[0.1, 0.1, 0.8]]);
        // permute word ids with pi = [1, 2, 0]: new word pi[i] = old word i
        let pi = [1usize, 2, 0];
        let mut log_beta = vec![0.0; 6];
        for i in 0..3 {
            for j in 0..2 {
                log_beta[pi[i] * 2 + j] = model.log_beta()[i * 2 + j];
            }
        }
        let permuted = LdaModel::new(2, 3, model.alpha().to_vec(), log_beta).unwrap();
        let words = vec![0u32, 2, 1, 0];
        let mapped: Vec<u32> = words.iter().map(|&w| pi[w as usize] as u32).collect();
        let params = EStepParams::default();
        let base = e_step_segment(&seg(words.clone()), &model, &params).unwrap();
        let perm = e_step_segment(&seg(mapped), &permuted, &params).unwrap();
        for j in 0..2 {
            assert!((perm.gamma[j] - base.gamma[j]).abs() < 1e-9);
        }
        assert!((perm.elbo - base.elbo).abs() < 1e-9);
        let base_exact = exact_marginal_log_likelihood(&seg(words), &model).unwrap();
        let perm_exact = exact_marginal_log_likelihood(
            &seg(vec![pi[0] as u32, pi[2] as u32, pi[1] as u32, pi[0] as u32]),
            &permuted,
        )
        .unwrap();
        assert!((base_exact - perm_exact).abs() < 1e-9);
    }
}
