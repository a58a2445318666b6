//! Command implementations. Every command writes its primary artifacts plus
//! a `run.json` sidecar echoing the seed and config, so any output directory
//! is self-describing and reruns are byte-comparable.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};

use latdom_core::io::{
    read_codebook, read_features, read_model, read_quantized, write_codebook, write_codebook_text,
    write_features, write_model, write_quantized, ModelMetadata,
};
use latdom_core::lda::{infer, train, EStepParams};
use latdom_core::manifest::DomainManifest;
use latdom_core::metrics::{
    consistency_grid, domain_distribution, kl_divergence, label_domain_table, smooth,
};
use latdom_core::synth::{synthesize, SynthCorpus};
use latdom_core::train_codebook;

use crate::config::RunConfig;

pub struct Ctx {
    pub run: RunConfig,
    pub out: PathBuf,
    pub command: &'static str,
    /// Verbatim text of the --config file ("" when none was given).
    pub config_text: String,
    pub seed_override: Option<u64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Ctx {
    /// Effective config echo embedded into models and manifests.
    pub fn config_echo(&self) -> String {
        self.run.print()
    }

    pub fn write_run_json(&self) -> Result<()> {
        let value = serde_json::json!({
            "command": self.command,
            "seed": self.run.seed,
            "seed_override": self.seed_override,
            "config_text": self.config_text,
            "effective_config": self.config_echo(),
        });
        let path = self.out.join("run.json");
        std::fs::write(&path, serde_json::to_string_pretty(&value)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    fn write(&self, name: &str, bytes_or_text: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.out.join(name);
        std::fs::write(&path, bytes_or_text)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

pub fn cmd_synth(ctx: &Ctx) -> Result<()> {
    let setup = ctx
        .run
        .synth
        .as_ref()
        .ok_or_else(|| anyhow!("synth needs a config file with a synth.* section"))?;
    let output = synthesize(&setup.spec).context("synthesis failed")?;
    match &output.corpus {
        SynthCorpus::Features(corpus) => {
            write_features(corpus, ctx.out.join("features.ldfc"))?;
            if let Some(split) = &setup.split {
                let (train, test) = corpus.split(split.fraction, split.seed)?;
                write_features(&train, ctx.out.join("features_train.ldfc"))?;
                write_features(&test, ctx.out.join("features_test.ldfc"))?;
                println!(
                    "synth: {} segments ({} train / {} test), dim {}",
                    corpus.segments().len(),
                    train.segments().len(),
                    test.segments().len(),
                    corpus.dim()
                );
            } else {
                println!(
                    "synth: {} segments, dim {}",
                    corpus.segments().len(),
                    corpus.dim()
                );
            }
        }
        SynthCorpus::Quantized(corpus) => {
            write_quantized(corpus, ctx.out.join("quantized.ldqc"))?;
            if let Some(split) = &setup.split {
                let (train, test) = corpus.split(split.fraction, split.seed)?;
                write_quantized(&train, ctx.out.join("quantized_train.ldqc"))?;
                write_quantized(&test, ctx.out.join("quantized_test.ldqc"))?;
            }
            println!(
                "synth: {} word segments, V={}",
                corpus.segments().len(),
                corpus.vocab_size()
            );
        }
    }
    ctx.write(
        "truth.json",
        serde_json::to_string_pretty(&output.ground_truth)?,
    )?;
    ctx.write_run_json()
}

pub fn cmd_train_codebook(ctx: &Ctx, features: &Path, text_means: bool) -> Result<()> {
    let corpus = read_features(features)?;
    let (codebook, _report) = train_codebook(&corpus, &ctx.run.vq)?;
    write_codebook(&codebook, ctx.out.join("codebook.ldcb"))?;
    if text_means {
        write_codebook_text(&codebook, ctx.out.join("codebook_means.txt"))?;
    }
    println!(
        "codebook: V={}, dim {}, distortion {:.6}",
        codebook.v(),
        codebook.dim(),
        codebook.training_distortion()
    );
    ctx.write_run_json()
}

pub fn cmd_quantize(ctx: &Ctx, features: &Path, codebook: &Path) -> Result<()> {
    let corpus = read_features(features)?;
    let codebook = read_codebook(codebook)?;
    let quantized = codebook.quantize_corpus(&corpus)?;
    write_quantized(&quantized, ctx.out.join("quantized.ldqc"))?;
    println!(
        "quantize: {} segments, {} words, V={}",
        quantized.segments().len(),
        quantized.total_words(),
        quantized.vocab_size()
    );
    ctx.write_run_json()
}

pub fn cmd_train_lda(ctx: &Ctx, quantized: &Path) -> Result<()> {
    let corpus = read_quantized(quantized)?;
    let config = ctx.run.lda.clone();
    let (model, report) = train(&corpus, &config)?;
    let metadata = ModelMetadata {
        config: config.clone(),
        final_elbo: report.final_elbo(),
        em_iterations: report.iterations,
        converged: report.converged,
        run_config: Some(ctx.config_echo()),
    };
    let model_path = ctx.out.join("model.ldam");
    write_model(&model, &metadata, &model_path)?;
    let fingerprint = sha256_hex(&std::fs::read(&model_path)?);
    let posteriors = infer(&corpus, &model, &config.estep_params())?;
    let manifest = DomainManifest::build(
        &corpus,
        &posteriors,
        &model,
        fingerprint,
        Some(ctx.config_echo()),
    )?;
    manifest.write_tsv(ctx.out.join("train_manifest.tsv"))?;
    println!(
        "train-lda: K={}, {} EM iteration(s), converged={}, final bound {:.3}",
        config.k,
        report.iterations,
        report.converged,
        report.final_elbo()
    );
    ctx.write_run_json()
}

/// E-step parameters for inference: the model's training metadata unless the
/// config file explicitly overrides a key.
fn infer_params(ctx: &Ctx, metadata: &ModelMetadata) -> EStepParams {
    let mut params = metadata.config.estep_params();
    if ctx.run.explicitly_set("lda.estep_max_iters") {
        params.max_iters = ctx.run.lda.estep_max_iters;
    }
    if ctx.run.explicitly_set("lda.estep_converge_tol") {
        params.converge_tol = ctx.run.lda.estep_converge_tol;
    }
    params
}

pub fn cmd_infer(ctx: &Ctx, quantized: &Path, model_path: &Path, name: &str) -> Result<()> {
    let corpus = read_quantized(quantized)?;
    let (model, metadata) = read_model(model_path)?;
    let fingerprint = sha256_hex(&std::fs::read(model_path)?);
    let params = infer_params(ctx, &metadata);
    let posteriors = infer(&corpus, &model, &params)?;
    let manifest = DomainManifest::build(
        &corpus,
        &posteriors,
        &model,
        fingerprint,
        Some(ctx.config_echo()),
    )?;
    manifest.write_tsv(ctx.out.join(name))?;
    println!(
        "infer: {} segments, K={}",
        manifest.entries().len(),
        manifest.k()
    );
    ctx.write_run_json()
}

fn write_label_tables(
    ctx: &Ctx,
    stem: &str,
    manifest: &DomainManifest,
    corpus: &latdom_core::corpus::QuantizedCorpus,
) -> Result<()> {
    let table = label_domain_table(manifest, corpus, ctx.run.report.basis)?;
    ctx.write(&format!("{stem}.tsv"), table.to_tsv())?;
    ctx.write(
        &format!("{stem}.json"),
        serde_json::to_string_pretty(&table.to_json())?,
    )?;
    Ok(())
}

pub(crate) fn cell_kld(ctx: &Ctx, train: &DomainManifest, test: &DomainManifest) -> Result<f64> {
    let k = train.k();
    let p = smooth(
        &domain_distribution(train, k, ctx.run.report.basis)?,
        ctx.run.report.discount,
    )?;
    let q = smooth(
        &domain_distribution(test, k, ctx.run.report.basis)?,
        ctx.run.report.discount,
    )?;
    Ok(kl_divergence(&p, &q)?)
}

pub enum ReportInput {
    Pair {
        train_manifest: PathBuf,
        test_manifest: PathBuf,
    },
    Sweep(PathBuf),
}

pub fn cmd_report(
    ctx: &Ctx,
    input: &ReportInput,
    train_corpus: &Path,
    test_corpus: &Path,
) -> Result<()> {
    let train_corpus = read_quantized(train_corpus)?;
    let test_corpus = read_quantized(test_corpus)?;
    match input {
        ReportInput::Pair {
            train_manifest,
            test_manifest,
        } => {
            let train = DomainManifest::read_tsv(train_manifest)?;
            let test = DomainManifest::read_tsv(test_manifest)?;
            if train.k() != test.k() {
                bail!(
                    "manifest domain counts differ: {} vs {}",
                    train.k(),
                    test.k()
                );
            }
            write_label_tables(ctx, "label_domain_train", &train, &train_corpus)?;
            write_label_tables(ctx, "label_domain_test", &test, &test_corpus)?;
            let kld = cell_kld(ctx, &train, &test)?;
            let summary = serde_json::json!({
                "k": train.k(),
                "basis": ctx.run.report.basis,
                "discount": ctx.run.report.discount,
                "kld_train_test": kld,
            });
            ctx.write("kld_summary.json", serde_json::to_string_pretty(&summary)?)?;
            println!("report: K={}, KLD(train||test) = {:.6}", train.k(), kld);
        }
        ReportInput::Sweep(sweep_dir) => {
            let cells = discover_sweep_cells(sweep_dir)?;
            if cells.is_empty() {
                bail!("no V*_K* cell directories under {}", sweep_dir.display());
            }
            let mut v_values: Vec<u32> = cells.keys().map(|&(v, _)| v).collect();
            v_values.sort_unstable();
            v_values.dedup();
            let mut k_values: Vec<usize> = cells.keys().map(|&(_, k)| k).collect();
            k_values.sort_unstable();
            k_values.dedup();
            let mut summary_cells = Vec::new();
            for (&(v, k), (train, test)) in &cells {
                write_label_tables(
                    ctx,
                    &format!("label_domain_V{v}_K{k}_train"),
                    train,
                    &train_corpus,
                )?;
                write_label_tables(
                    ctx,
                    &format!("label_domain_V{v}_K{k}_test"),
                    test,
                    &test_corpus,
                )?;
                summary_cells.push(serde_json::json!({
                    "v": v,
                    "k": k,
                    "kld": cell_kld(ctx, train, test)?,
                }));
            }
            let grid = consistency_grid(
                &v_values,
                &k_values,
                &cells,
                ctx.run.report.discount,
                ctx.run.report.basis,
            )?;
            ctx.write("grid.tsv", grid.to_tsv())?;
            ctx.write("grid.json", serde_json::to_string_pretty(&grid.to_json())?)?;
            let summary = serde_json::json!({
                "basis": ctx.run.report.basis,
                "discount": ctx.run.report.discount,
                "cells": summary_cells,
            });
            ctx.write("kld_summary.json", serde_json::to_string_pretty(&summary)?)?;
            println!(
                "report: {} cells, V in {:?}, K in {:?}",
                cells.len(),
                v_values,
                k_values
            );
        }
    }
    ctx.write_run_json()
}

/// Find `V{v}_K{k}` cell directories holding manifest pairs.
pub fn discover_sweep_cells(
    dir: &Path,
) -> Result<std::collections::BTreeMap<(u32, usize), (DomainManifest, DomainManifest)>> {
    let mut cells = std::collections::BTreeMap::new();
    for entry in std::fs::read_dir(dir)
        .with_context(|| format!("cannot read sweep directory {}", dir.display()))?
    {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().to_string();
        let Some(cell) = parse_cell_name(&name) else {
            continue;
        };
        let train = DomainManifest::read_tsv(entry.path().join("train_manifest.tsv"))
            .with_context(|| format!("cell {name}: bad train manifest"))?;
        let test = DomainManifest::read_tsv(entry.path().join("test_manifest.tsv"))
            .with_context(|| format!("cell {name}: bad test manifest"))?;
        cells.insert(cell, (train, test));
    }
    Ok(cells)
}

fn parse_cell_name(name: &str) -> Option<(u32, usize)> {
    let rest = name.strip_prefix('V')?;
    let (v, k) = rest.split_once("_K")?;
    Some((v.parse().ok()?, k.parse().ok()?))
}
