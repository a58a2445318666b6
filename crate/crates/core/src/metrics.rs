//! Evaluation of discovered domains.
//!
//! Covers the three evaluation surfaces: label-versus-hidden-domain mass
//! tables, smoothed KL divergence between the domain distributions of two
//! data sets (low divergence = the model carves train and test the same
//! way), and optimal topic matching against synthetic ground truth.
//!
//! Mass is measured in frames by default (proportional to audio time);
//! a segment basis is available for quick tests.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corpus::QuantizedCorpus;
use crate::lda::TopicMatrix;
use crate::manifest::DomainManifest;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("manifest has no entries")]
    EmptyManifest,
    #[error("domain id {id} is out of range for K={k}")]
    DomainOutOfRange { id: usize, k: usize },
    #[error("distribution is all zero")]
    AllZero,
    #[error("negative count {value} at bin {index}")]
    NegativeCount { index: usize, value: f64 },
    #[error("discount {0} must lie in [0, 1)")]
    InvalidDiscount(f64),
    #[error("length mismatch: {p} vs {q}")]
    LengthMismatch { p: usize, q: usize },
    #[error("Q has a non-positive entry at index {index}; smooth the distribution first")]
    ZeroInQ { index: usize },
    #[error("P is not a probability vector: {0}")]
    InvalidP(String),
    #[error("segment `{id}` is missing from the corpus")]
    MissingSegment { id: String },
    #[error("segment `{id}` has no source label")]
    UnlabeledSegment { id: String },
    #[error("no manifests for cell V={v}, K={k}")]
    MissingCell { v: u32, k: usize },
    #[error("grid has no cells")]
    EmptyGrid,
    #[error("topic matrices disagree in shape: {a_v}x{a_k} vs {b_v}x{b_k}")]
    ShapeMismatch {
        a_v: usize,
        a_k: usize,
        b_v: usize,
        b_k: usize,
    },
}

/// What one unit of mass means in a distribution or table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassBasis {
    Segments,
    Frames,
}

/// Mass per hidden domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDistribution {
    pub counts: Vec<f64>,
    pub basis: MassBasis,
}

/// Mass assigned to each hidden domain, by segment count or frame count.
pub fn domain_distribution(
    manifest: &DomainManifest,
    k: usize,
    basis: MassBasis,
) -> Result<DomainDistribution, MetricsError> {
    if manifest.entries().is_empty() {
        return Err(MetricsError::EmptyManifest);
    }
    let mut counts = vec![0.0f64; k];
    for entry in manifest.entries() {
        if entry.domain_id >= k {
            return Err(MetricsError::DomainOutOfRange {
                id: entry.domain_id,
                k,
            });
        }
        counts[entry.domain_id] += match basis {
            MassBasis::Segments => 1.0,
            MassBasis::Frames => entry.num_words as f64,
        };
    }
    Ok(DomainDistribution { counts, basis })
}

/// Source-label rows against hidden-domain columns, with marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDomainTable {
    pub labels: Vec<String>,
    pub k: usize,
    pub basis: MassBasis,
    /// Row-major `labels.len() × k`.
    pub cells: Vec<f64>,
    pub row_totals: Vec<f64>,
    pub col_totals: Vec<f64>,
    pub total: f64,
}

impl LabelDomainTable {
    pub fn cell(&self, row: usize, domain: usize) -> f64 {
        self.cells[row * self.k + domain]
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("label");
        for d in 0..self.k {
            out.push_str(&format!("\tD{d}"));
        }
        out.push_str("\ttotal\n");
        for (r, label) in self.labels.iter().enumerate() {
            out.push_str(label);
            for d in 0..self.k {
                out.push_str(&format!("\t{}", self.cell(r, d)));
            }
            out.push_str(&format!("\t{}\n", self.row_totals[r]));
        }
        out.push_str("total");
        for d in 0..self.k {
            out.push_str(&format!("\t{}", self.col_totals[d]));
        }
        out.push_str(&format!("\t{}\n", self.total));
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "labels": self.labels,
            "k": self.k,
            "basis": match self.basis {
                MassBasis::Segments => "segments",
                MassBasis::Frames => "frames",
            },
            "cells": (0..self.labels.len())
                .map(|r| self.cells[r * self.k..(r + 1) * self.k].to_vec())
                .collect::<Vec<_>>(),
            "row_totals": self.row_totals,
            "col_totals": self.col_totals,
            "total": self.total,
        })
    }
}

/// Cross-tabulate manifest domain assignments against the corpus source
/// labels. Every manifest segment must exist in the corpus and carry a
/// label.
pub fn label_domain_table(
    manifest: &DomainManifest,
    corpus: &QuantizedCorpus,
    basis: MassBasis,
) -> Result<LabelDomainTable, MetricsError> {
    if manifest.entries().is_empty() {
        return Err(MetricsError::EmptyManifest);
    }
    let k = manifest.k();
    let by_id: BTreeMap<&str, (Option<&str>, usize)> = corpus
        .segments()
        .iter()
        .map(|s| (s.id(), (s.source_label(), s.len())))
        .collect();
    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for entry in manifest.entries() {
        if entry.domain_id >= k {
            return Err(MetricsError::DomainOutOfRange {
                id: entry.domain_id,
                k,
            });
        }
        let &(label, len) =
            by_id
                .get(entry.segment_id.as_str())
                .ok_or_else(|| MetricsError::MissingSegment {
                    id: entry.segment_id.clone(),
                })?;
        let label = label.ok_or_else(|| MetricsError::UnlabeledSegment {
            id: entry.segment_id.clone(),
        })?;
        let mass = match basis {
            MassBasis::Segments => 1.0,
            MassBasis::Frames => len as f64,
        };
        rows.entry(label.to_string())
            .or_insert_with(|| vec![0.0; k])[entry.domain_id] += mass;
    }
    let labels: Vec<String> = rows.keys().cloned().collect();
    let mut cells = Vec::with_capacity(labels.len() * k);
    for label in &labels {
        cells.extend_from_slice(&rows[label]);
    }
    let row_totals: Vec<f64> = cells.chunks_exact(k).map(|r| r.iter().sum()).collect();
    let col_totals: Vec<f64> = (0..k)
        .map(|d| cells.iter().skip(d).step_by(k).sum())
        .collect();
    let total = row_totals.iter().sum();
    Ok(LabelDomainTable {
        labels,
        k,
        basis,
        cells,
        row_totals,
        col_totals,
        total,
    })
}

/// Normalize a count distribution into probabilities, discounting mass onto
/// zero bins.
///
/// When zero bins exist, nonzero bins keep `(1 − discount)` of their
/// normalized mass and the discount is spread equally across the zero bins;
/// with no zero bins this is plain normalization.
pub fn smooth(dist: &DomainDistribution, discount: f64) -> Result<Vec<f64>, MetricsError> {
    if !(0.0..1.0).contains(&discount) {
        return Err(MetricsError::InvalidDiscount(discount));
    }
    if let Some((i, &value)) = dist
        .counts
        .iter()
        .enumerate()
        .find(|(_, &c)| c < 0.0 || !c.is_finite())
    {
        return Err(MetricsError::NegativeCount { index: i, value });
    }
    let total: f64 = dist.counts.iter().sum();
    if total <= 0.0 {
        return Err(MetricsError::AllZero);
    }
    let zeros = dist.counts.iter().filter(|&&c| c == 0.0).count();
    if zeros == 0 {
        Ok(dist.counts.iter().map(|&c| c / total).collect())
    } else {
        let fill = discount / zeros as f64;
        Ok(dist
            .counts
            .iter()
            .map(|&c| {
                if c == 0.0 {
                    fill
                } else {
                    c / total * (1.0 - discount)
                }
            })
            .collect())
    }
}

/// `KLD(P‖Q) = Σ P(i) ln(P(i)/Q(i))` with `0·ln(0/q) = 0`.
///
/// Q must be strictly positive — smooth it first when it may contain zero
/// counts. P must be a probability vector with non-negative entries.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, MetricsError> {
    if p.len() != q.len() {
        return Err(MetricsError::LengthMismatch {
            p: p.len(),
            q: q.len(),
        });
    }
    if let Some((i, _)) = q.iter().enumerate().find(|(_, &x)| x.is_nan() || x <= 0.0) {
        return Err(MetricsError::ZeroInQ { index: i });
    }
    if let Some(&bad) = p.iter().find(|&&x| x < 0.0 || !x.is_finite()) {
        return Err(MetricsError::InvalidP(format!("entry {bad}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(MetricsError::InvalidP(format!("sums to {sum}")));
    }
    let mut kld = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            kld += pi * (pi / qi).ln();
        }
    }
    Ok(kld)
}

/// Smoothed train/test divergence per (codebook size, domain count) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyGrid {
    pub v_values: Vec<u32>,
    pub k_values: Vec<usize>,
    /// Row-major `v_values.len() × k_values.len()`.
    pub kld: Vec<f64>,
}

impl ConsistencyGrid {
    pub fn cell(&self, v_index: usize, k_index: usize) -> f64 {
        self.kld[v_index * self.k_values.len() + k_index]
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("V");
        for k in &self.k_values {
            out.push_str(&format!("\tK={k}"));
        }
        out.push('\n');
        for (vi, v) in self.v_values.iter().enumerate() {
            out.push_str(&v.to_string());
            for ki in 0..self.k_values.len() {
                out.push_str(&format!("\t{}", self.cell(vi, ki)));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "v_values": self.v_values,
            "k_values": self.k_values,
            "kld": (0..self.v_values.len())
                .map(|vi| self.kld[vi * self.k_values.len()..(vi + 1) * self.k_values.len()].to_vec())
                .collect::<Vec<_>>(),
        })
    }
}

/// Smooth-then-KLD(train‖test) for every (V, K) cell. `cells` must contain a
/// train/test manifest pair for each combination.
pub fn consistency_grid(
    v_values: &[u32],
    k_values: &[usize],
    cells: &BTreeMap<(u32, usize), (DomainManifest, DomainManifest)>,
    discount: f64,
    basis: MassBasis,
) -> Result<ConsistencyGrid, MetricsError> {
    if v_values.is_empty() || k_values.is_empty() {
        return Err(MetricsError::EmptyGrid);
    }
    let mut kld = Vec::with_capacity(v_values.len() * k_values.len());
    for &v in v_values {
        for &k in k_values {
            let (train, test) = cells
                .get(&(v, k))
                .ok_or(MetricsError::MissingCell { v, k })?;
            let p = smooth(&domain_distribution(train, k, basis)?, discount)?;
            let q = smooth(&domain_distribution(test, k, basis)?, discount)?;
            kld.push(kl_divergence(&p, &q)?);
        }
    }
    Ok(ConsistencyGrid {
        v_values: v_values.to_vec(),
        k_values: k_values.to_vec(),
        kld,
    })
}

/// Result of matching estimated topic columns against reference columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicMatch {
    /// `permutation[r]` is the estimated column matched to reference column
    /// `r`.
    pub permutation: Vec<usize>,
    /// Mean cosine similarity of the matched column pairs.
    pub mean_cosine: f64,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Kuhn–Munkres (potentials form) minimum-cost square assignment.
/// Returns `assignment[row] = col`.
fn hungarian_min(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-indexed with a virtual 0 row/column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if matched[j] > 0 {
            assignment[matched[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Match estimated topic columns to reference columns by total cosine
/// similarity: optimal assignment for K ≤ 16, greedy beyond.
pub fn match_topics(
    estimated: &TopicMatrix,
    reference: &TopicMatrix,
) -> Result<TopicMatch, MetricsError> {
    if estimated.v != reference.v || estimated.k != reference.k {
        return Err(MetricsError::ShapeMismatch {
            a_v: estimated.v,
            a_k: estimated.k,
            b_v: reference.v,
            b_k: reference.k,
        });
    }
    let k = estimated.k;
    let est_cols: Vec<Vec<f64>> = (0..k).map(|j| estimated.column(j)).collect();
    let ref_cols: Vec<Vec<f64>> = (0..k).map(|j| reference.column(j)).collect();
    // similarity[r * k + e] = cos(reference r, estimated e)
    let mut sim = vec![0.0f64; k * k];
    for r in 0..k {
        for e in 0..k {
            sim[r * k + e] = cosine(&ref_cols[r], &est_cols[e]);
        }
    }
    let permutation = if k <= 16 {
        let cost: Vec<f64> = sim.iter().map(|&s| -s).collect();
        hungarian_min(&cost, k)
    } else {
        // greedy: best available pair first, lexicographic tie-break
        let mut pairs: Vec<(usize, usize)> = (0..k * k).map(|i| (i / k, i % k)).collect();
        pairs.sort_by(|&(r1, e1), &(r2, e2)| {
            sim[r2 * k + e2]
                .partial_cmp(&sim[r1 * k + e1])
                .unwrap()
                .then(r1.cmp(&r2))
                .then(e1.cmp(&e2))
        });
        let mut perm = vec![usize::MAX; k];
        let mut taken = vec![false; k];
        for (r, e) in pairs {
            if perm[r] == usize::MAX && !taken[e] {
                perm[r] = e;
                taken[e] = true;
            }
        }
        perm
    };
    let mean_cosine = permutation
        .iter()
        .enumerate()
        .map(|(r, &e)| sim[r * k + e])
        .sum::<f64>()
        / k as f64;
    Ok(TopicMatch {
        permutation,
        mean_cosine,
    })
}
