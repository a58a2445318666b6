//! Segment-to-domain assignment manifests.
//!
//! A manifest is the pipeline's handoff artifact: one row per segment with
//! the assigned hidden domain and the full posterior Dirichlet parameter γ,
//! so downstream adaptation tooling can re-weight or re-threshold without
//! re-running inference. Serialized as TSV with a single `#`-prefixed JSON
//! header line carrying K, the model fingerprint, Σα, and an optional
//! run-config echo.
//!
//! The stored `domain_id` always equals the argmax of the stored γ (lowest
//! index on ties); both the builder and the reader enforce it. Word counts
//! are not stored explicitly: Σγ − Σα recovers them exactly to rounding,
//! which keeps the row format minimal.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QuantizedCorpus;
use crate::lda::{assign_domain, LdaModel, SegmentPosterior};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest is empty")]
    Empty,
    #[error("posterior/corpus mismatch: {0}")]
    Misaligned(String),
    #[error("segment `{id}`: stored domain {stored} is not the argmax of gamma ({argmax})")]
    ArgmaxMismatch {
        id: String,
        stored: usize,
        argmax: usize,
    },
    #[error("duplicate segment id `{id}`")]
    DuplicateId { id: String },
    #[error("segment `{id}`: gamma entries must be positive and finite")]
    BadGamma { id: String },
    #[error("bad manifest header: {0}")]
    Header(String),
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("cannot access {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub segment_id: String,
    pub domain_id: usize,
    pub source_label: Option<String>,
    pub gamma: Vec<f64>,
    pub num_words: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestHeader {
    format: String,
    version: u32,
    k: usize,
    model_fingerprint: String,
    alpha_sum: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    run_config: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainManifest {
    k: usize,
    model_fingerprint: String,
    alpha_sum: f64,
    run_config: Option<String>,
    entries: Vec<ManifestEntry>,
}

impl DomainManifest {
    /// Assemble a manifest from a corpus and its inferred posteriors.
    pub fn build(
        corpus: &QuantizedCorpus,
        posteriors: &[SegmentPosterior],
        model: &LdaModel,
        model_fingerprint: impl Into<String>,
        run_config: Option<String>,
    ) -> Result<Self, ManifestError> {
        if corpus.segments().len() != posteriors.len() {
            return Err(ManifestError::Misaligned(format!(
                "{} segments vs {} posteriors",
                corpus.segments().len(),
                posteriors.len()
            )));
        }
        let k = model.k();
        let mut entries = Vec::with_capacity(posteriors.len());
        for (seg, post) in corpus.segments().iter().zip(posteriors) {
            if post.gamma.len() != k {
                return Err(ManifestError::Misaligned(format!(
                    "segment `{}`: gamma length {} vs K={k}",
                    seg.id(),
                    post.gamma.len()
                )));
            }
            entries.push(ManifestEntry {
                segment_id: seg.id().to_string(),
                domain_id: assign_domain(post),
                source_label: seg.source_label().map(String::from),
                gamma: post.gamma.clone(),
                num_words: seg.len(),
            });
        }
        let manifest = Self {
            k,
            model_fingerprint: model_fingerprint.into(),
            alpha_sum: model.alpha().iter().sum(),
            run_config,
            entries,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Re-check every invariant: non-empty, unique ids, positive finite γ,
    /// and `domain_id == argmax γ` with lowest-index ties.
    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.entries.is_empty() {
            return Err(ManifestError::Empty);
        }
        let mut seen = HashSet::new();
        for entry in &self.entries {
            if !seen.insert(entry.segment_id.clone()) {
                return Err(ManifestError::DuplicateId {
                    id: entry.segment_id.clone(),
                });
            }
            if entry.gamma.len() != self.k
                || entry.gamma.iter().any(|&g| !g.is_finite() || g <= 0.0)
            {
                return Err(ManifestError::BadGamma {
                    id: entry.segment_id.clone(),
                });
            }
            let mut argmax = 0usize;
            for (j, &g) in entry.gamma.iter().enumerate() {
                if g > entry.gamma[argmax] {
                    argmax = j;
                }
            }
            if argmax != entry.domain_id {
                return Err(ManifestError::ArgmaxMismatch {
                    id: entry.segment_id.clone(),
                    stored: entry.domain_id,
                    argmax,
                });
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn model_fingerprint(&self) -> &str {
        &self.model_fingerprint
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha_sum
    }

    pub fn run_config(&self) -> Option<&str> {
        self.run_config.as_deref()
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn to_tsv_string(&self) -> String {
        let header = ManifestHeader {
            format: "latdom-manifest".to_string(),
            version: 1,
            k: self.k,
            model_fingerprint: self.model_fingerprint.clone(),
            alpha_sum: self.alpha_sum,
            run_config: self.run_config.clone(),
        };
        let mut out = String::new();
        out.push('#');
        out.push_str(&serde_json::to_string(&header).expect("header serializes"));
        out.push('\n');
        for entry in &self.entries {
            write!(
                out,
                "{}\t{}\t{}",
                entry.segment_id,
                entry.domain_id,
                entry.source_label.as_deref().unwrap_or("")
            )
            .unwrap();
            for g in &entry.gamma {
                write!(out, "\t{g}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv_string()).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(())
    }

    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_tsv_str(&text)
    }

    pub fn from_tsv_str(text: &str) -> Result<Self, ManifestError> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines
            .next()
            .ok_or_else(|| ManifestError::Header("file is empty".into()))?;
        let header_json = first
            .strip_prefix('#')
            .ok_or_else(|| ManifestError::Header("missing '#' header line".into()))?;
        let header: ManifestHeader =
            serde_json::from_str(header_json).map_err(|e| ManifestError::Header(e.to_string()))?;
        if header.format != "latdom-manifest" || header.version != 1 {
            return Err(ManifestError::Header(format!(
                "unsupported format `{}` version {}",
                header.format, header.version
            )));
        }
        let mut entries = Vec::new();
        for (line_no, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 + header.k {
                return Err(ManifestError::Line {
                    line: line_no + 1,
                    msg: format!("expected {} fields, got {}", 3 + header.k, fields.len()),
                });
            }
            let domain_id: usize = fields[1].parse().map_err(|_| ManifestError::Line {
                line: line_no + 1,
                msg: format!("bad domain id `{}`", fields[1]),
            })?;
            let mut gamma = Vec::with_capacity(header.k);
            for raw in &fields[3..] {
                let g: f64 = raw.parse().map_err(|_| ManifestError::Line {
                    line: line_no + 1,
                    msg: format!("bad gamma value `{raw}`"),
                })?;
                gamma.push(g);
            }
            // word count is implied: Σγ = Σα + N
            let excess: f64 = gamma.iter().sum::<f64>() - header.alpha_sum;
            let num_words = excess.round();
            if !num_words.is_finite() || num_words < 1.0 || (excess - num_words).abs() > 0.01 {
                return Err(ManifestError::Line {
                    line: line_no + 1,
                    msg: format!(
                        "gamma sum implies a word count of {excess}, expected a positive integer"
                    ),
                });
            }
            entries.push(ManifestEntry {
                segment_id: fields[0].to_string(),
                domain_id,
                source_label: if fields[2].is_empty() {
                    None
                } else {
                    Some(fields[2].to_string())
                },
                gamma,
                num_words: num_words as usize,
            });
        }
        let manifest = Self {
            k: header.k,
            model_fingerprint: header.model_fingerprint,
            alpha_sum: header.alpha_sum,
            run_config: header.run_config,
            entries,
        };
        manifest.validate()?;
        Ok(manifest)
    }
}
