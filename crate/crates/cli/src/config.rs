//! The run-config file: a flat `key = value` text format.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Lists are space-separated. Defaults apply for every omitted key and
//! `latdom <cmd> --print-config` shows the effective result. Keys:
//!
//! ```text
//! seed                        global seed, default 0 (--seed overrides)
//!
//! vq.target_v                 codebook size (power of two), default 2048
//! vq.em_iters_per_level       default 20
//! vq.split_epsilon            default 0.05
//! vq.convergence_tol          default 1e-5
//! vq.normalize                true|false, default true
//! vq.seed                     default = seed
//!
//! lda.k                       domain count, default 8
//! lda.max_em_iters            default 100
//! lda.em_converge_tol         default 1e-5
//! lda.estep_max_iters         default 100
//! lda.estep_converge_tol      default 1e-4
//! lda.alpha_mode              newton|fixed, default newton
//! lda.alpha_init              Newton start, default 1.0
//! lda.alpha_value             fixed-mode value, default 1.0
//! lda.beta_smoothing_eta      default 1e-6
//! lda.seed                    default = seed
//!
//! report.discount             default 0.03
//! report.basis                frames|segments, default frames
//!
//! sweep.v_list                e.g. `128 512 2048`
//! sweep.k_list                e.g. `4 8 16`
//!
//! synth.segments_per_source   required for synth
//! synth.frames_per_segment    required for synth
//! synth.split_fraction        optional train fraction in (0,1)
//! synth.split_seed            default = seed
//! synth.source.<i>.label      sources indexed from 0
//! # Gaussian sources:
//! synth.source.<i>.scope                    frame|segment, default frame
//! synth.source.<i>.component.<j>.weight    components indexed from 0
//! synth.source.<i>.component.<j>.mean      space-separated reals
//! synth.source.<i>.component.<j>.std       default all-ones
//! # topic-parameter sources (words drawn from a known model):
//! synth.source.<i>.lda.alpha                space-separated positives
//! synth.source.<i>.lda.vocab                vocabulary size
//! synth.source.<i>.lda.beta_concentration  Dirichlet concentration for β*
//! synth.source.<i>.lda.beta_seed           default = seed
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use anyhow::{anyhow, bail, Result};

use latdom_core::codebook::VqTrainConfig;
use latdom_core::lda::{AlphaMode, LdaTrainConfig};
use latdom_core::metrics::MassBasis;
use latdom_core::synth::{
    random_topic_matrix, Emitter, GmmComponent, GmmEmitter, LdaEmitter, MixScope, SourceSpec,
    SynthSpec,
};

/// Parsed `key = value` file with consumption tracking, so unknown keys can
/// be reported after a command has taken what it understands.
pub struct RawConfig {
    values: BTreeMap<String, String>,
    order: Vec<String>,
    consumed: BTreeSet<String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut order = Vec::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected `key = value`", line_no + 1))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if values.insert(key.clone(), value).is_some() {
                bail!("config line {}: duplicate key `{key}`", line_no + 1);
            }
            order.push(key);
        }
        Ok(Self {
            values,
            order,
            consumed: BTreeSet::new(),
        })
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn take_raw(&mut self, key: &str) -> Option<String> {
        if let Some(v) = self.values.get(key) {
            self.consumed.insert(key.to_string());
            Some(v.clone())
        } else {
            None
        }
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take_raw(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| anyhow!("config key `{key}`: cannot parse `{raw}`")),
        }
    }

    fn take_list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.take_raw(key) {
            None => Ok(None),
            Some(raw) => raw
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<T>()
                        .map_err(|_| anyhow!("config key `{key}`: cannot parse `{tok}`"))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn finish(&self) -> Result<()> {
        let unknown: Vec<&String> = self
            .order
            .iter()
            .filter(|k| !self.consumed.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            bail!(
                "unknown config key(s): {}",
                unknown
                    .iter()
                    .map(|k| format!("`{k}`"))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReportParams {
    pub discount: f64,
    pub basis: MassBasis,
}

#[derive(Debug, Clone)]
pub struct SweepParams {
    pub v_list: Vec<u32>,
    pub k_list: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct SplitParams {
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthSetup {
    pub spec: SynthSpec,
    pub split: Option<SplitParams>,
    /// The raw synth.* lines, kept for --print-config.
    pub raw_lines: Vec<(String, String)>,
}

/// Effective configuration for one command invocation.
#[derive(Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub vq: VqTrainConfig,
    pub lda: LdaTrainConfig,
    pub report: ReportParams,
    pub synth: Option<SynthSetup>,
    pub sweep: Option<SweepParams>,
    /// Keys the user set explicitly (as opposed to defaults).
    pub explicit: BTreeSet<String>,
}

impl RunConfig {
    pub fn from_text(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let mut raw = RawConfig::parse(text)?;
        let explicit: BTreeSet<String> = raw.order.iter().cloned().collect();
        let file_seed: Option<u64> = raw.take_parsed("seed")?;
        let seed = seed_override.or(file_seed).unwrap_or(0);

        let mut vq = VqTrainConfig {
            seed,
            ..VqTrainConfig::default()
        };
        if let Some(v) = raw.take_parsed("vq.target_v")? {
            vq.target_v = v;
        }
        if let Some(v) = raw.take_parsed("vq.em_iters_per_level")? {
            vq.em_iters_per_level = v;
        }
        if let Some(v) = raw.take_parsed("vq.split_epsilon")? {
            vq.split_epsilon = v;
        }
        if let Some(v) = raw.take_parsed("vq.convergence_tol")? {
            vq.convergence_tol = v;
        }
        if let Some(v) = raw.take_parsed("vq.normalize")? {
            vq.normalize = v;
        }
        if let Some(v) = raw.take_parsed("vq.seed")? {
            vq.seed = v;
        }

        let mut lda = LdaTrainConfig {
            seed,
            ..LdaTrainConfig::default()
        };
        if let Some(v) = raw.take_parsed("lda.k")? {
            lda.k = v;
        }
        if let Some(v) = raw.take_parsed("lda.max_em_iters")? {
            lda.max_em_iters = v;
        }
        if let Some(v) = raw.take_parsed("lda.em_converge_tol")? {
            lda.em_converge_tol = v;
        }
        if let Some(v) = raw.take_parsed("lda.estep_max_iters")? {
            lda.estep_max_iters = v;
        }
        if let Some(v) = raw.take_parsed("lda.estep_converge_tol")? {
            lda.estep_converge_tol = v;
        }
        let alpha_init: Option<f64> = raw.take_parsed("lda.alpha_init")?;
        let alpha_value: Option<f64> = raw.take_parsed("lda.alpha_value")?;
        match raw.take_raw("lda.alpha_mode").as_deref() {
            None | Some("newton") => {
                lda.alpha_mode = AlphaMode::Newton {
                    init: alpha_init.unwrap_or(1.0),
                };
                if alpha_value.is_some() {
                    bail!("config key `lda.alpha_value` requires `lda.alpha_mode = fixed`");
                }
            }
            Some("fixed") => {
                lda.alpha_mode = AlphaMode::Fixed {
                    value: alpha_value.unwrap_or(1.0),
                };
                if alpha_init.is_some() {
                    bail!("config key `lda.alpha_init` requires `lda.alpha_mode = newton`");
                }
            }
            Some(other) => {
                bail!("config key `lda.alpha_mode`: expected newton|fixed, got `{other}`")
            }
        }
        if let Some(v) = raw.take_parsed("lda.beta_smoothing_eta")? {
            lda.beta_smoothing_eta = v;
        }
        if let Some(v) = raw.take_parsed("lda.seed")? {
            lda.seed = v;
        }

        let report = ReportParams {
            discount: raw.take_parsed("report.discount")?.unwrap_or(0.03),
            basis: match raw.take_raw("report.basis").as_deref() {
                None | Some("frames") => MassBasis::Frames,
                Some("segments") => MassBasis::Segments,
                Some(other) => {
                    bail!("config key `report.basis`: expected frames|segments, got `{other}`")
                }
            },
        };

        let sweep = match (
            raw.take_list::<u32>("sweep.v_list")?,
            raw.take_list::<usize>("sweep.k_list")?,
        ) {
            (None, None) => None,
            (Some(v_list), Some(k_list)) => {
                if v_list.is_empty() || k_list.is_empty() {
                    bail!("sweep.v_list and sweep.k_list must be non-empty");
                }
                Some(SweepParams { v_list, k_list })
            }
            _ => bail!("sweep.v_list and sweep.k_list must be given together"),
        };

        let synth = parse_synth(&mut raw, seed)?;
        raw.finish()?;
        Ok(Self {
            seed,
            vq,
            lda,
            report,
            synth,
            sweep,
            explicit,
        })
    }

    pub fn explicitly_set(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Canonical effective printout for --print-config.
    pub fn print(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "vq.target_v = {}", self.vq.target_v);
        let _ = writeln!(
            out,
            "vq.em_iters_per_level = {}",
            self.vq.em_iters_per_level
        );
        let _ = writeln!(out, "vq.split_epsilon = {}", self.vq.split_epsilon);
        let _ = writeln!(out, "vq.convergence_tol = {}", self.vq.convergence_tol);
        let _ = writeln!(out, "vq.normalize = {}", self.vq.normalize);
        let _ = writeln!(out, "vq.seed = {}", self.vq.seed);
        let _ = writeln!(out, "lda.k = {}", self.lda.k);
        let _ = writeln!(out, "lda.max_em_iters = {}", self.lda.max_em_iters);
        let _ = writeln!(out, "lda.em_converge_tol = {}", self.lda.em_converge_tol);
        let _ = writeln!(out, "lda.estep_max_iters = {}", self.lda.estep_max_iters);
        let _ = writeln!(
            out,
            "lda.estep_converge_tol = {}",
            self.lda.estep_converge_tol
        );
        match self.lda.alpha_mode {
            AlphaMode::Newton { init } => {
                let _ = writeln!(out, "lda.alpha_mode = newton");
                let _ = writeln!(out, "lda.alpha_init = {init}");
            }
            AlphaMode::Fixed { value } => {
                let _ = writeln!(out, "lda.alpha_mode = fixed");
                let _ = writeln!(out, "lda.alpha_value = {value}");
            }
        }
        let _ = writeln!(
            out,
            "lda.beta_smoothing_eta = {}",
            self.lda.beta_smoothing_eta
        );
        let _ = writeln!(out, "lda.seed = {}", self.lda.seed);
        let _ = writeln!(out, "report.discount = {}", self.report.discount);
        let _ = writeln!(
            out,
            "report.basis = {}",
            match self.report.basis {
                MassBasis::Frames => "frames",
                MassBasis::Segments => "segments",
            }
        );
        if let Some(sweep) = &self.sweep {
            let v: Vec<String> = sweep.v_list.iter().map(|v| v.to_string()).collect();
            let k: Vec<String> = sweep.k_list.iter().map(|k| k.to_string()).collect();
            let _ = writeln!(out, "sweep.v_list = {}", v.join(" "));
            let _ = writeln!(out, "sweep.k_list = {}", k.join(" "));
        }
        if let Some(synth) = &self.synth {
            for (key, value) in &synth.raw_lines {
                let _ = writeln!(out, "{key} = {value}");
            }
        }
        out
    }
}

fn parse_synth(raw: &mut RawConfig, seed: u64) -> Result<Option<SynthSetup>> {
    let any_synth = raw.order.iter().any(|k| k.starts_with("synth."));
    if !any_synth {
        return Ok(None);
    }
    let raw_lines: Vec<(String, String)> = raw
        .order
        .iter()
        .filter(|k| k.starts_with("synth."))
        .map(|k| (k.clone(), raw.values[k].clone()))
        .collect();
    let segments_per_source: usize = raw
        .take_parsed("synth.segments_per_source")?
        .ok_or_else(|| anyhow!("synth requires `synth.segments_per_source`"))?;
    let frames_per_segment: usize = raw
        .take_parsed("synth.frames_per_segment")?
        .ok_or_else(|| anyhow!("synth requires `synth.frames_per_segment`"))?;
    let synth_seed: u64 = raw.take_parsed("synth.seed")?.unwrap_or(seed);
    let split = match raw.take_parsed::<f64>("synth.split_fraction")? {
        Some(fraction) => Some(SplitParams {
            fraction,
            seed: raw.take_parsed("synth.split_seed")?.unwrap_or(seed),
        }),
        None => {
            if raw.has("synth.split_seed") {
                bail!("`synth.split_seed` requires `synth.split_fraction`");
            }
            None
        }
    };

    let mut sources = Vec::new();
    let mut i = 0usize;
    loop {
        let prefix = format!("synth.source.{i}");
        let Some(label) = raw.take_raw(&format!("{prefix}.label")) else {
            break;
        };
        let has_lda = raw.has(&format!("{prefix}.lda.alpha"));
        let has_gmm = raw.has(&format!("{prefix}.component.0.weight"));
        let emitter = match (has_lda, has_gmm) {
            (true, false) => {
                let alpha: Vec<f64> = raw
                    .take_list(&format!("{prefix}.lda.alpha"))?
                    .expect("checked present");
                let vocab: usize = raw
                    .take_parsed(&format!("{prefix}.lda.vocab"))?
                    .ok_or_else(|| anyhow!("source {i}: missing `{prefix}.lda.vocab`"))?;
                let concentration: f64 = raw
                    .take_parsed(&format!("{prefix}.lda.beta_concentration"))?
                    .ok_or_else(|| {
                        anyhow!("source {i}: missing `{prefix}.lda.beta_concentration`")
                    })?;
                let beta_seed: u64 = raw
                    .take_parsed(&format!("{prefix}.lda.beta_seed"))?
                    .unwrap_or(seed);
                Emitter::Lda(LdaEmitter {
                    beta: random_topic_matrix(vocab, alpha.len(), concentration, beta_seed),
                    alpha,
                })
            }
            (false, true) => {
                let scope = match raw.take_raw(&format!("{prefix}.scope")).as_deref() {
                    None | Some("frame") => MixScope::Frame,
                    Some("segment") => MixScope::Segment,
                    Some(other) => {
                        bail!("source {i}: `{prefix}.scope` expects frame|segment, got `{other}`")
                    }
                };
                let mut components = Vec::new();
                let mut j = 0usize;
                loop {
                    let cp = format!("{prefix}.component.{j}");
                    let Some(weight) = raw.take_parsed::<f64>(&format!("{cp}.weight"))? else {
                        break;
                    };
                    let mean: Vec<f64> = raw
                        .take_list(&format!("{cp}.mean"))?
                        .ok_or_else(|| anyhow!("source {i}: missing `{cp}.mean`"))?;
                    let std: Vec<f64> = raw
                        .take_list(&format!("{cp}.std"))?
                        .unwrap_or_else(|| vec![1.0; mean.len()]);
                    components.push(GmmComponent { weight, mean, std });
                    j += 1;
                }
                let dim = components[0].mean.len();
                Emitter::Gmm(GmmEmitter {
                    dim,
                    scope,
                    components,
                })
            }
            (true, true) => bail!("source {i}: has both Gaussian components and topic parameters"),
            (false, false) => {
                bail!("source {i}: needs `{prefix}.component.0.*` or `{prefix}.lda.*` keys")
            }
        };
        sources.push(SourceSpec { label, emitter });
        i += 1;
    }
    if sources.is_empty() {
        bail!("synth section has no `synth.source.0.label`");
    }
    Ok(Some(SynthSetup {
        spec: SynthSpec {
            seed: synth_seed,
            segments_per_source,
            frames_per_segment,
            sources,
        },
        split,
        raw_lines,
    }))
}
