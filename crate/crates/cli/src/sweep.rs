//! Resumable (V, K) grid sweeps.
//!
//! Layout under `--out`:
//!
//! ```text
//! shared/codebook_V{v}.ldcb          per-V artifacts (K-independent)
//! shared/quantized_train_V{v}.ldqc
//! shared/quantized_test_V{v}.ldqc
//! shared/fingerprint_V{v}.json
//! V{v}_K{k}/model.ldam               one directory per grid cell
//! V{v}_K{k}/train_manifest.tsv
//! V{v}_K{k}/test_manifest.tsv
//! V{v}_K{k}/kld.json
//! V{v}_K{k}/fingerprint.json
//! grid.tsv, grid.json, run.json      consolidated outputs
//! ```
//!
//! A fingerprint file records a signature over the effective config and the
//! input corpora plus the SHA-256 of every artifact. A unit (shared or cell)
//! whose fingerprint matches is skipped wholesale; a fingerprint whose
//! artifacts are missing or altered aborts the sweep (partial-cell
//! corruption); a missing fingerprint re-runs the unit, overwriting any
//! partial leftovers. There are no lock files: the fingerprint is written
//! last, so an interrupted unit simply re-runs.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use latdom_core::io::{
    read_features, read_quantized, write_codebook, write_model, write_quantized, ModelMetadata,
};
use latdom_core::lda::{infer, train};
use latdom_core::manifest::DomainManifest;
use latdom_core::metrics::consistency_grid;
use latdom_core::train_codebook;

use crate::commands::{discover_sweep_cells, sha256_hex, Ctx};

struct Fingerprint {
    path: PathBuf,
    signature: String,
    artifacts: Vec<PathBuf>,
}

impl Fingerprint {
    fn new(path: PathBuf, signature: String, artifacts: Vec<PathBuf>) -> Self {
        Self {
            path,
            signature,
            artifacts,
        }
    }

    /// True when this unit is already complete and untouched.
    fn is_done(&self) -> Result<bool> {
        if !self.path.exists() {
            return Ok(false);
        }
        let text = std::fs::read_to_string(&self.path)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("bad fingerprint file {}", self.path.display()))?;
        let recorded_sig = value
            .get("signature")
            .and_then(|v| v.as_str())
            .ok_or_else(|| anyhow!("fingerprint {} has no signature", self.path.display()))?;
        if recorded_sig != self.signature {
            bail!(
                "{}: recorded configuration does not match this run; \
                 remove the directory to recompute",
                self.path.display()
            );
        }
        let recorded = value
            .get("artifacts")
            .and_then(|v| v.as_object())
            .ok_or_else(|| anyhow!("fingerprint {} has no artifacts", self.path.display()))?;
        for artifact in &self.artifacts {
            let name = artifact
                .file_name()
                .expect("artifact paths have file names")
                .to_string_lossy()
                .to_string();
            let want = recorded
                .get(&name)
                .and_then(|v| v.as_str())
                .ok_or_else(|| {
                    anyhow!(
                        "{}: fingerprint lacks entry for {name}",
                        self.path.display()
                    )
                })?;
            let bytes = std::fs::read(artifact).with_context(|| {
                format!(
                    "{}: artifact {name} is missing (partial-cell corruption)",
                    self.path.display()
                )
            })?;
            if sha256_hex(&bytes) != want {
                bail!(
                    "{}: artifact {name} does not match its fingerprint \
                     (partial-cell corruption); remove the directory to recompute",
                    self.path.display()
                );
            }
        }
        Ok(true)
    }

    fn write(&self) -> Result<()> {
        let mut artifacts = serde_json::Map::new();
        for artifact in &self.artifacts {
            let name = artifact
                .file_name()
                .expect("artifact paths have file names")
                .to_string_lossy()
                .to_string();
            let bytes = std::fs::read(artifact)?;
            artifacts.insert(name, serde_json::Value::String(sha256_hex(&bytes)));
        }
        let value = serde_json::json!({
            "signature": self.signature,
            "artifacts": artifacts,
        });
        std::fs::write(&self.path, serde_json::to_string_pretty(&value)?)?;
        Ok(())
    }
}

pub fn cmd_sweep(ctx: &Ctx, features_train: &Path, features_test: &Path) -> Result<()> {
    let sweep =
        ctx.run.sweep.as_ref().ok_or_else(|| {
            anyhow!("sweep needs `sweep.v_list` and `sweep.k_list` in the config")
        })?;
    let train_sha = sha256_hex(&std::fs::read(features_train)?);
    let test_sha = sha256_hex(&std::fs::read(features_test)?);
    let echo = ctx.config_echo();
    let base_sig = format!("{echo}\ntrain={train_sha}\ntest={test_sha}");

    let shared_dir = ctx.out.join("shared");
    std::fs::create_dir_all(&shared_dir)?;
    for &v in &sweep.v_list {
        let codebook_path = shared_dir.join(format!("codebook_V{v}.ldcb"));
        let qtrain_path = shared_dir.join(format!("quantized_train_V{v}.ldqc"));
        let qtest_path = shared_dir.join(format!("quantized_test_V{v}.ldqc"));
        let fingerprint = Fingerprint::new(
            shared_dir.join(format!("fingerprint_V{v}.json")),
            sha256_hex(format!("shared\nV={v}\n{base_sig}").as_bytes()),
            vec![
                codebook_path.clone(),
                qtrain_path.clone(),
                qtest_path.clone(),
            ],
        );
        if fingerprint.is_done()? {
            println!("sweep: shared V={v} up to date, skipping");
            continue;
        }
        let train_corpus = read_features(features_train)?;
        let test_corpus = read_features(features_test)?;
        let mut vq = ctx.run.vq.clone();
        vq.target_v = v;
        let (codebook, _) = train_codebook(&train_corpus, &vq)?;
        write_codebook(&codebook, &codebook_path)?;
        write_quantized(&codebook.quantize_corpus(&train_corpus)?, &qtrain_path)?;
        write_quantized(&codebook.quantize_corpus(&test_corpus)?, &qtest_path)?;
        fingerprint.write()?;
        println!(
            "sweep: shared V={v} done (distortion {:.6})",
            codebook.training_distortion()
        );
    }

    for &v in &sweep.v_list {
        let qtrain_path = shared_dir.join(format!("quantized_train_V{v}.ldqc"));
        let qtest_path = shared_dir.join(format!("quantized_test_V{v}.ldqc"));
        for &k in &sweep.k_list {
            let cell_dir = ctx.out.join(format!("V{v}_K{k}"));
            std::fs::create_dir_all(&cell_dir)?;
            let model_path = cell_dir.join("model.ldam");
            let train_manifest_path = cell_dir.join("train_manifest.tsv");
            let test_manifest_path = cell_dir.join("test_manifest.tsv");
            let kld_path = cell_dir.join("kld.json");
            let fingerprint = Fingerprint::new(
                cell_dir.join("fingerprint.json"),
                sha256_hex(format!("cell\nV={v}\nK={k}\n{base_sig}").as_bytes()),
                vec![
                    model_path.clone(),
                    train_manifest_path.clone(),
                    test_manifest_path.clone(),
                    kld_path.clone(),
                ],
            );
            if fingerprint.is_done()? {
                println!("sweep: cell V={v} K={k} up to date, skipping");
                continue;
            }
            let qtrain = read_quantized(&qtrain_path)?;
            let qtest = read_quantized(&qtest_path)?;
            let mut lda = ctx.run.lda.clone();
            lda.k = k;
            let (model, report) = train(&qtrain, &lda)?;
            let metadata = ModelMetadata {
                config: lda.clone(),
                final_elbo: report.final_elbo(),
                em_iterations: report.iterations,
                converged: report.converged,
                run_config: Some(echo.clone()),
            };
            write_model(&model, &metadata, &model_path)?;
            let model_sha = sha256_hex(&std::fs::read(&model_path)?);
            let params = lda.estep_params();
            let train_manifest = DomainManifest::build(
                &qtrain,
                &infer(&qtrain, &model, &params)?,
                &model,
                model_sha.clone(),
                Some(echo.clone()),
            )?;
            train_manifest.write_tsv(&train_manifest_path)?;
            let test_manifest = DomainManifest::build(
                &qtest,
                &infer(&qtest, &model, &params)?,
                &model,
                model_sha,
                Some(echo.clone()),
            )?;
            test_manifest.write_tsv(&test_manifest_path)?;
            let kld = crate::commands::cell_kld(ctx, &train_manifest, &test_manifest)?;
            std::fs::write(
                &kld_path,
                serde_json::to_string_pretty(&serde_json::json!({
                    "v": v,
                    "k": k,
                    "kld": kld,
                }))?,
            )?;
            fingerprint.write()?;
            println!("sweep: cell V={v} K={k} done (KLD {kld:.6})");
        }
    }

    // consolidated grid over every cell directory
    let cells = discover_sweep_cells(&ctx.out)?;
    let mut v_sorted = sweep.v_list.clone();
    v_sorted.sort_unstable();
    v_sorted.dedup();
    let mut k_sorted = sweep.k_list.clone();
    k_sorted.sort_unstable();
    k_sorted.dedup();
    let grid = consistency_grid(
        &v_sorted,
        &k_sorted,
        &cells,
        ctx.run.report.discount,
        ctx.run.report.basis,
    )?;
    std::fs::write(ctx.out.join("grid.tsv"), grid.to_tsv())?;
    std::fs::write(
        ctx.out.join("grid.json"),
        serde_json::to_string_pretty(&grid.to_json())?,
    )?;
    ctx.write_run_json()?;
    println!("sweep: grid written ({} cells)", cells.len());
    Ok(())
}
