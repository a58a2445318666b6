//! `latdom` — latent acoustic domain discovery pipeline.
//!
//! Exit codes: 0 success; 2 input, config, or file-format errors (clap usage
//! errors included); 3 numerical failures during model estimation.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod sweep;

use commands::{Ctx, ReportInput};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "latdom",
    version,
    about = "Discover latent acoustic domains: train codebooks, fit topic models, \
             assign segments to hidden domains, and score domain consistency",
    after_help = "Exit codes: 0 success, 2 input/config/format error, 3 numerical failure."
)]
struct Cli {
    /// Key-value config file (see README for the key reference)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed overriding the config file's `seed`
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory (required by every command)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Print the effective configuration (defaults merged with the config
    /// file and flags) and exit
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-domain corpus from the config's synth section
    Synth,
    /// Train an acoustic-word codebook on a feature corpus
    TrainCodebook {
        #[arg(long, value_name = "PATH")]
        features: PathBuf,
        /// Also export the means as text, one per line
        #[arg(long)]
        text_means: bool,
    },
    /// Quantize a feature corpus into acoustic words
    Quantize {
        #[arg(long, value_name = "PATH")]
        features: PathBuf,
        #[arg(long, value_name = "PATH")]
        codebook: PathBuf,
    },
    /// Estimate a topic model on a quantized corpus and emit the train manifest
    TrainLda {
        #[arg(long, value_name = "PATH")]
        quantized: PathBuf,
    },
    /// Infer domain assignments for a quantized corpus under a trained model
    Infer {
        #[arg(long, value_name = "PATH")]
        quantized: PathBuf,
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Output manifest file name
        #[arg(long, value_name = "NAME", default_value = "manifest.tsv")]
        name: String,
    },
    /// Label-domain tables and smoothed train/test KL divergence
    Report {
        /// Train manifest (pair mode; use --sweep for grid mode)
        #[arg(long, value_name = "PATH", conflicts_with = "sweep")]
        train_manifest: Option<PathBuf>,
        /// Test manifest (pair mode)
        #[arg(long, value_name = "PATH", conflicts_with = "sweep")]
        test_manifest: Option<PathBuf>,
        /// A sweep output directory with V{v}_K{k} cells (grid mode)
        #[arg(long, value_name = "DIR")]
        sweep: Option<PathBuf>,
        /// Labeled quantized train corpus
        #[arg(long, value_name = "PATH")]
        train_corpus: PathBuf,
        /// Labeled quantized test corpus
        #[arg(long, value_name = "PATH")]
        test_corpus: PathBuf,
    },
    /// Run the full pipeline over the config's (V, K) grid, resumably
    Sweep {
        #[arg(long, value_name = "PATH")]
        features_train: PathBuf,
        #[arg(long, value_name = "PATH")]
        features_test: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

/// 3 for numerical failures inside model estimation, 2 for everything else.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if matches!(
            cause.downcast_ref::<latdom_core::lda::LdaError>(),
            Some(latdom_core::lda::LdaError::NonFinite { .. })
        ) {
            return 3;
        }
    }
    2
}

fn run(cli: Cli) -> Result<()> {
    let config_text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?,
        None => String::new(),
    };
    let run_config = RunConfig::from_text(&config_text, cli.seed)?;
    if cli.print_config {
        print!("{}", run_config.print());
        return Ok(());
    }
    let out = cli
        .out
        .ok_or_else(|| anyhow!("--out is required (or use --print-config)"))?;
    std::fs::create_dir_all(&out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    let command_name = match &cli.command {
        Command::Synth => "synth",
        Command::TrainCodebook { .. } => "train-codebook",
        Command::Quantize { .. } => "quantize",
        Command::TrainLda { .. } => "train-lda",
        Command::Infer { .. } => "infer",
        Command::Report { .. } => "report",
        Command::Sweep { .. } => "sweep",
    };
    let ctx = Ctx {
        run: run_config,
        out,
        command: command_name,
        config_text,
        seed_override: cli.seed,
    };
    match cli.command {
        Command::Synth => commands::cmd_synth(&ctx),
        Command::TrainCodebook {
            features,
            text_means,
        } => commands::cmd_train_codebook(&ctx, &features, text_means),
        Command::Quantize { features, codebook } => {
            commands::cmd_quantize(&ctx, &features, &codebook)
        }
        Command::TrainLda { quantized } => commands::cmd_train_lda(&ctx, &quantized),
        Command::Infer {
            quantized,
            model,
            name,
        } => commands::cmd_infer(&ctx, &quantized, &model, &name),
        Command::Report {
            train_manifest,
            test_manifest,
            sweep,
            train_corpus,
            test_corpus,
        } => {
            let input = match (train_manifest, test_manifest, sweep) {
                (Some(train), Some(test), None) => ReportInput::Pair {
                    train_manifest: train,
                    test_manifest: test,
                },
                (None, None, Some(dir)) => ReportInput::Sweep(dir),
                _ => {
                    return Err(anyhow!(
                        "report needs either --train-manifest and --test-manifest, or --sweep"
                    ))
                }
            };
            commands::cmd_report(&ctx, &input, &train_corpus, &test_corpus)
        }
        Command::Sweep {
            features_train,
            features_test,
        } => sweep::cmd_sweep(&ctx, &features_train, &features_test),
    }
}
