//! File formats for corpora, codebooks, and models.
//!
//! All binary formats are little-endian with a 4-byte magic and a u32
//! version. Read errors name the byte offset of the offending value.
//!
//! ```text
//! feature corpus  "LDFC" | version | segment count |
//!                 per segment: id (u16 len + utf8) | label (u16 len + utf8,
//!                 len 0 = absent) | T u32 | n u32 | T×n f32 row-major
//! quantized       "LDQC" | version | V u32 | segment count |
//!                 per segment: id | label | N u32 | N×u32 word ids
//! codebook        "LDCB" | version | V u32 | n u32 | normalized u32 (0/1) |
//!                 if 1: n×f64 shift, n×f64 scale | V×n f32 means |
//!                 f64 training distortion
//! model           "LDAM" | version | K u32 | V u32 | K×f64 alpha |
//!                 V×K f64 log beta (row-major) | u32 metadata length |
//!                 UTF-8 JSON metadata
//! ```
//!
//! Corpus files also have a text form for debugging: a `#LDFC v1 n=<dim>`
//! (or `#LDQC v1 V=<size>`) header line, then one segment per line as
//! `id TAB label TAB space-separated values`. An empty label field means no
//! label. Values print in shortest round-trip form, so text round-trips are
//! value-exact. Readers sniff binary vs text automatically.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::{Codebook, CodebookError, Normalization};
use crate::corpus::{
    CorpusError, FeatureCorpus, FeatureSegment, QuantizedCorpus, QuantizedSegment,
};
use crate::lda::{LdaError, LdaModel, LdaTrainConfig};

const FEATURE_MAGIC: &[u8; 4] = b"LDFC";
const QUANTIZED_MAGIC: &[u8; 4] = b"LDQC";
const CODEBOOK_MAGIC: &[u8; 4] = b"LDCB";
const MODEL_MAGIC: &[u8; 4] = b"LDAM";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: bad magic at byte 0, expected `{expected}`")]
    BadMagic { path: String, expected: String },
    #[error("{path}: unsupported version {got} at byte {offset}")]
    UnsupportedVersion { path: String, got: u32, offset: u64 },
    #[error("{path}: truncated at byte {offset} (needed {needed} more byte(s))")]
    Truncated {
        path: String,
        offset: u64,
        needed: usize,
    },
    #[error("{path}: invalid UTF-8 string at byte {offset}")]
    InvalidUtf8 { path: String, offset: u64 },
    #[error("{path}: non-finite value at byte {offset}")]
    NonFinite { path: String, offset: u64 },
    #[error("{path}: dimension mismatch at byte {offset}: expected {expected}, got {got}")]
    DimensionMismatch {
        path: String,
        offset: u64,
        expected: u32,
        got: u32,
    },
    #[error("{path}: word id {word} >= vocabulary size {vocab} at byte {offset}")]
    WordOutOfRange {
        path: String,
        offset: u64,
        word: u32,
        vocab: u32,
    },
    #[error("{path}: {extra} trailing byte(s) after payload at byte {offset}")]
    TrailingBytes {
        path: String,
        offset: u64,
        extra: usize,
    },
    #[error("{path}:{line}: {msg}")]
    Text {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: {cause}")]
    Corpus { path: String, cause: CorpusError },
    #[error("{path}: {cause}")]
    Codebook { path: String, cause: CodebookError },
    #[error("{path}: {cause}")]
    Model { path: String, cause: LdaError },
    #[error("cannot access {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8], path: &'a str) -> Self {
        Self { buf, pos: 0, path }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.pos + n > self.buf.len() {
            return Err(FormatError::Truncated {
                path: self.path.to_string(),
                offset: self.buf.len() as u64,
                needed: self.pos + n - self.buf.len(),
            });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, FormatError> {
        let len = self.u16()? as usize;
        let offset = self.offset();
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| FormatError::InvalidUtf8 {
            path: self.path.to_string(),
            offset,
        })
    }

    fn finish(&self) -> Result<(), FormatError> {
        if self.pos != self.buf.len() {
            return Err(FormatError::TrailingBytes {
                path: self.path.to_string(),
                offset: self.offset(),
                extra: self.buf.len() - self.pos,
            });
        }
        Ok(())
    }
}

fn check_header(reader: &mut ByteReader<'_>, magic: &[u8; 4]) -> Result<(), FormatError> {
    let got = reader.take(4)?;
    if got != magic {
        return Err(FormatError::BadMagic {
            path: reader.path.to_string(),
            expected: String::from_utf8_lossy(magic).to_string(),
        });
    }
    let voff = reader.offset();
    let version = reader.u32()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion {
            path: reader.path.to_string(),
            got: version,
            offset: voff,
        });
    }
    Ok(())
}

fn push_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn corpus_err(path: &Path, cause: CorpusError) -> FormatError {
    FormatError::Corpus {
        path: path.display().to_string(),
        cause,
    }
}

// ---------------------------------------------------------------- features

pub fn feature_corpus_to_bytes(corpus: &FeatureCorpus) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(corpus.segments().len() as u32).to_le_bytes());
    for seg in corpus.segments() {
        push_string(&mut out, seg.id());
        push_string(&mut out, seg.source_label().unwrap_or(""));
        out.extend_from_slice(&(seg.num_frames() as u32).to_le_bytes());
        out.extend_from_slice(&(seg.dim() as u32).to_le_bytes());
        for &x in seg.frames() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn write_features(corpus: &FeatureCorpus, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    std::fs::write(path, feature_corpus_to_bytes(corpus)).map_err(io_err(path))?;
    Ok(())
}

pub fn write_features_text(
    corpus: &FeatureCorpus,
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    let mut out = format!("#LDFC v1 n={}\n", corpus.dim());
    for seg in corpus.segments() {
        out.push_str(seg.id());
        out.push('\t');
        out.push_str(seg.source_label().unwrap_or(""));
        out.push('\t');
        let mut first = true;
        for &x in seg.frames() {
            if !first {
                out.push(' ');
            }
            out.push_str(&format!("{x}"));
            first = false;
        }
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out).map_err(io_err(path.as_ref()))?;
    Ok(())
}

/// Read a feature corpus, auto-detecting the binary and text forms.
pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureCorpus, FormatError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(FEATURE_MAGIC) {
        read_features_bytes(&bytes, &path.display().to_string())
    } else if bytes.starts_with(b"#LDFC") {
        read_features_text(&bytes, path)
    } else {
        Err(FormatError::BadMagic {
            path: path.display().to_string(),
            expected: "LDFC".to_string(),
        })
    }
}

fn read_features_bytes(bytes: &[u8], path: &str) -> Result<FeatureCorpus, FormatError> {
    let mut r = ByteReader::new(bytes, path);
    check_header(&mut r, FEATURE_MAGIC)?;
    let count = r.u32()?;
    let mut segments = Vec::with_capacity(count as usize);
    let mut dim: Option<u32> = None;
    for _ in 0..count {
        let id = r.string()?;
        let label = r.string()?;
        let frames_count = r.u32()?;
        let noff = r.offset();
        let n = r.u32()?;
        match dim {
            None => dim = Some(n),
            Some(d) if d != n => {
                return Err(FormatError::DimensionMismatch {
                    path: path.to_string(),
                    offset: noff,
                    expected: d,
                    got: n,
                })
            }
            _ => {}
        }
        let total = frames_count as usize * n as usize;
        let mut frames = Vec::with_capacity(total);
        for _ in 0..total {
            let voff = r.offset();
            let x = r.f32()?;
            if !x.is_finite() {
                return Err(FormatError::NonFinite {
                    path: path.to_string(),
                    offset: voff,
                });
            }
            frames.push(x);
        }
        let label = if label.is_empty() { None } else { Some(label) };
        segments.push(
            FeatureSegment::new(id, label, n as usize, frames)
                .map_err(|e| corpus_err(Path::new(path), e))?,
        );
    }
    r.finish()?;
    FeatureCorpus::new(segments).map_err(|e| corpus_err(Path::new(path), e))
}

fn read_features_text(bytes: &[u8], path: &Path) -> Result<FeatureCorpus, FormatError> {
    let pstr = path.display().to_string();
    let text = std::str::from_utf8(bytes).map_err(|_| FormatError::InvalidUtf8 {
        path: pstr.clone(),
        offset: 0,
    })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().expect("checked non-empty prefix");
    let terr = |line: usize, msg: String| FormatError::Text {
        path: pstr.clone(),
        line,
        msg,
    };
    let dim: usize = header
        .strip_prefix("#LDFC v1 n=")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| terr(1, format!("bad header `{header}`")))?;
    let mut segments = Vec::new();
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(terr(
                line_no + 1,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let mut frames = Vec::new();
        for raw in fields[2].split_whitespace() {
            let x: f32 = raw
                .parse()
                .map_err(|_| terr(line_no + 1, format!("bad value `{raw}`")))?;
            if !x.is_finite() {
                return Err(terr(line_no + 1, format!("non-finite value `{raw}`")));
            }
            frames.push(x);
        }
        let label = if fields[1].is_empty() {
            None
        } else {
            Some(fields[1].to_string())
        };
        segments.push(
            FeatureSegment::new(fields[0], label, dim, frames).map_err(|e| corpus_err(path, e))?,
        );
    }
    FeatureCorpus::new(segments).map_err(|e| corpus_err(path, e))
}

// --------------------------------------------------------------- quantized

pub fn quantized_corpus_to_bytes(corpus: &QuantizedCorpus) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(QUANTIZED_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&corpus.vocab_size().to_le_bytes());
    out.extend_from_slice(&(corpus.segments().len() as u32).to_le_bytes());
    for seg in corpus.segments() {
        push_string(&mut out, seg.id());
        push_string(&mut out, seg.source_label().unwrap_or(""));
        out.extend_from_slice(&(seg.len() as u32).to_le_bytes());
        for &w in seg.words() {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

pub fn write_quantized(
    corpus: &QuantizedCorpus,
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    let path = path.as_ref();
    std::fs::write(path, quantized_corpus_to_bytes(corpus)).map_err(io_err(path))?;
    Ok(())
}

pub fn write_quantized_text(
    corpus: &QuantizedCorpus,
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    let mut out = format!("#LDQC v1 V={}\n", corpus.vocab_size());
    for seg in corpus.segments() {
        out.push_str(seg.id());
        out.push('\t');
        out.push_str(seg.source_label().unwrap_or(""));
        out.push('\t');
        let words: Vec<String> = seg.words().iter().map(|w| w.to_string()).collect();
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out).map_err(io_err(path.as_ref()))?;
    Ok(())
}

/// Read a quantized corpus, auto-detecting the binary and text forms.
pub fn read_quantized(path: impl AsRef<Path>) -> Result<QuantizedCorpus, FormatError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(QUANTIZED_MAGIC) {
        read_quantized_bytes(&bytes, &path.display().to_string())
    } else if bytes.starts_with(b"#LDQC") {
        read_quantized_text(&bytes, path)
    } else {
        Err(FormatError::BadMagic {
            path: path.display().to_string(),
            expected: "LDQC".to_string(),
        })
    }
}

fn read_quantized_bytes(bytes: &[u8], path: &str) -> Result<QuantizedCorpus, FormatError> {
    let mut r = ByteReader::new(bytes, path);
    check_header(&mut r, QUANTIZED_MAGIC)?;
    let vocab = r.u32()?;
    let count = r.u32()?;
    let mut segments = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let id = r.string()?;
        let label = r.string()?;
        let n = r.u32()?;
        let mut words = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let woff = r.offset();
            let w = r.u32()?;
            if w >= vocab {
                return Err(FormatError::WordOutOfRange {
                    path: path.to_string(),
                    offset: woff,
                    word: w,
                    vocab,
                });
            }
            words.push(w);
        }
        let label = if label.is_empty() { None } else { Some(label) };
        segments.push(
            QuantizedSegment::new(id, label, words).map_err(|e| corpus_err(Path::new(path), e))?,
        );
    }
    r.finish()?;
    QuantizedCorpus::new(vocab, segments).map_err(|e| corpus_err(Path::new(path), e))
}

fn read_quantized_text(bytes: &[u8], path: &Path) -> Result<QuantizedCorpus, FormatError> {
    let pstr = path.display().to_string();
    let text = std::str::from_utf8(bytes).map_err(|_| FormatError::InvalidUtf8 {
        path: pstr.clone(),
        offset: 0,
    })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().expect("checked non-empty prefix");
    let terr = |line: usize, msg: String| FormatError::Text {
        path: pstr.clone(),
        line,
        msg,
    };
    let vocab: u32 = header
        .strip_prefix("#LDQC v1 V=")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| terr(1, format!("bad header `{header}`")))?;
    let mut segments = Vec::new();
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(terr(
                line_no + 1,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let mut words = Vec::new();
        for raw in fields[2].split_whitespace() {
            let w: u32 = raw
                .parse()
                .map_err(|_| terr(line_no + 1, format!("bad word id `{raw}`")))?;
            if w >= vocab {
                return Err(terr(line_no + 1, format!("word id {w} >= V={vocab}")));
            }
            words.push(w);
        }
        let label = if fields[1].is_empty() {
            None
        } else {
            Some(fields[1].to_string())
        };
        segments
            .push(QuantizedSegment::new(fields[0], label, words).map_err(|e| corpus_err(path, e))?);
    }
    QuantizedCorpus::new(vocab, segments).map_err(|e| corpus_err(path, e))
}

// ---------------------------------------------------------------- codebook

pub fn codebook_to_bytes(codebook: &Codebook) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CODEBOOK_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&codebook.v().to_le_bytes());
    out.extend_from_slice(&(codebook.dim() as u32).to_le_bytes());
    match codebook.normalization() {
        Some(norm) => {
            out.extend_from_slice(&1u32.to_le_bytes());
            for &s in &norm.shift {
                out.extend_from_slice(&s.to_le_bytes());
            }
            for &s in &norm.scale {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
        None => out.extend_from_slice(&0u32.to_le_bytes()),
    }
    for &m in codebook.means() {
        out.extend_from_slice(&m.to_le_bytes());
    }
    out.extend_from_slice(&codebook.training_distortion().to_le_bytes());
    out
}

pub fn write_codebook(codebook: &Codebook, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    std::fs::write(path, codebook_to_bytes(codebook)).map_err(io_err(path))?;
    Ok(())
}

/// Text export for inspection: one mean per line, space-separated.
pub fn write_codebook_text(codebook: &Codebook, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let mut out = String::new();
    for j in 0..codebook.v() as usize {
        let values: Vec<String> = codebook.mean(j).iter().map(|m| m.to_string()).collect();
        out.push_str(&values.join(" "));
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out).map_err(io_err(path.as_ref()))?;
    Ok(())
}

pub fn read_codebook(path: impl AsRef<Path>) -> Result<Codebook, FormatError> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let mut r = ByteReader::new(&bytes, &pstr);
    check_header(&mut r, CODEBOOK_MAGIC)?;
    let v = r.u32()?;
    let dim = r.u32()? as usize;
    let normalized = r.u32()?;
    let norm = if normalized == 1 {
        let mut shift = Vec::with_capacity(dim);
        for _ in 0..dim {
            shift.push(r.f64()?);
        }
        let mut scale = Vec::with_capacity(dim);
        for _ in 0..dim {
            scale.push(r.f64()?);
        }
        Some(Normalization { shift, scale })
    } else {
        None
    };
    let total = v as usize * dim;
    let mut means = Vec::with_capacity(total);
    for _ in 0..total {
        let moff = r.offset();
        let m = r.f32()?;
        if !m.is_finite() {
            return Err(FormatError::NonFinite {
                path: pstr.clone(),
                offset: moff,
            });
        }
        means.push(m);
    }
    let distortion = r.f64()?;
    r.finish()?;
    Codebook::from_parts(v, dim, means, norm, distortion).map_err(|e| FormatError::Codebook {
        path: pstr,
        cause: e,
    })
}

// ------------------------------------------------------------------- model

/// Training provenance stored inside the model file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub config: LdaTrainConfig,
    pub final_elbo: f64,
    pub em_iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_config: Option<String>,
}

pub fn model_to_bytes(model: &LdaModel, metadata: &ModelMetadata) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.k() as u32).to_le_bytes());
    out.extend_from_slice(&(model.vocab_size() as u32).to_le_bytes());
    for &a in model.alpha() {
        out.extend_from_slice(&a.to_le_bytes());
    }
    for &b in model.log_beta() {
        out.extend_from_slice(&b.to_le_bytes());
    }
    let blob = serde_json::to_vec(metadata).expect("metadata serializes");
    out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
    out.extend_from_slice(&blob);
    out
}

pub fn write_model(
    model: &LdaModel,
    metadata: &ModelMetadata,
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(model, metadata)).map_err(io_err(path))?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<(LdaModel, ModelMetadata), FormatError> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let mut r = ByteReader::new(&bytes, &pstr);
    check_header(&mut r, MODEL_MAGIC)?;
    let k = r.u32()? as usize;
    let v = r.u32()? as usize;
    let mut alpha = Vec::with_capacity(k);
    for _ in 0..k {
        alpha.push(r.f64()?);
    }
    let mut log_beta = Vec::with_capacity(v * k);
    for _ in 0..v * k {
        log_beta.push(r.f64()?);
    }
    let blob_len = r.u32()? as usize;
    let blob_off = r.offset();
    let blob = r.take(blob_len)?;
    r.finish()?;
    let metadata: ModelMetadata = serde_json::from_slice(blob).map_err(|e| FormatError::Text {
        path: pstr.clone(),
        line: 0,
        msg: format!("bad metadata JSON at byte {blob_off}: {e}"),
    })?;
    let model = LdaModel::new(k, v, alpha, log_beta).map_err(|e| FormatError::Model {
        path: pstr,
        cause: e,
    })?;
    Ok((model, metadata))
}
