//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS line with its measured numbers (visible with `--nocapture`).
//!
//! Runtime-heavy criteria use fixed seeds throughout, so every run measures
//! the same computation.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use latdom_core::codebook::{train_codebook, VqTrainConfig};
use latdom_core::corpus::{FeatureCorpus, FeatureSegment, QuantizedSegment};
use latdom_core::lda::{
    assign_domain, e_step_segment_traced, exact_marginal_log_likelihood, infer, train, AlphaMode,
    LdaModel, LdaTrainConfig,
};
use latdom_core::manifest::DomainManifest;
use latdom_core::metrics::{
    kl_divergence, label_domain_table, match_topics, smooth, DomainDistribution, MassBasis,
};
use latdom_core::synth::{
    random_topic_matrix, synthesize, Emitter, GmmComponent, GmmEmitter, LdaEmitter, MixScope,
    SourceSpec, SynthCorpus, SynthSpec,
};

/// Small deterministic generator for test instances.
struct Lcg(u64);

impl Lcg {
    fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0
    }

    fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }
}

fn gaussian_source(label: &str, mean: Vec<f64>) -> SourceSpec {
    let dim = mean.len();
    SourceSpec {
        label: label.into(),
        emitter: Emitter::Gmm(GmmEmitter {
            dim,
            scope: MixScope::Frame,
            components: vec![GmmComponent {
                weight: 1.0,
                mean,
                std: vec![1.0; dim],
            }],
        }),
    }
}

// ---------------------------------------------------------------------------
// Criterion 1: variational bound validity on enumerable instances.
// ---------------------------------------------------------------------------
#[test]
fn criterion_1_bound_validity() {
    let mut rng = Lcg(0x1001);
    let params = latdom_core::lda::EStepParams::default();
    let mut instances = 0usize;
    let mut worst_gap = f64::NEG_INFINITY;
    while instances < 1000 {
        let k = rng.range(1, 3);
        let v = rng.range(2, 5);
        let n = rng.range(1, 6);
        let beta = random_topic_matrix(v, k, 0.3 + rng.unit(), rng.next_u64());
        let alpha: Vec<f64> = (0..k).map(|_| 0.05 + 1.95 * rng.unit()).collect();
        let log_beta: Vec<f64> = beta.probs.iter().map(|&p| p.ln()).collect();
        let model = LdaModel::new(k, v, alpha, log_beta).expect("valid random model");
        let words: Vec<u32> = (0..n).map(|_| rng.range(0, v - 1) as u32).collect();
        let segment = QuantizedSegment::new(format!("i{instances}"), None, words).unwrap();

        let (post, trace) = e_step_segment_traced(&segment, &model, &params).unwrap();
        let exact = exact_marginal_log_likelihood(&segment, &model).unwrap();
        assert!(
            post.elbo <= exact + 1e-9,
            "instance {instances}: bound {} exceeds exact {}",
            post.elbo,
            exact
        );
        // the gap to the exact marginal shrinks monotonically
        for w in trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-9 - 1e-8 * w[0].abs(),
                "instance {instances}: bound regressed {} -> {}",
                w[0],
                w[1]
            );
        }
        worst_gap = worst_gap.max(post.elbo - exact);
        instances += 1;
    }
    println!(
        "ACCEPTANCE criterion 1 (bound validity): PASS — 1000 instances, max(elbo - exact) = {worst_gap:.3e}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: corpus ELBO monotone over EM on an M=500, V=100, K=4, N=200
// corpus.
// ---------------------------------------------------------------------------
#[test]
fn criterion_2_elbo_monotonicity() {
    let beta_star = random_topic_matrix(100, 4, 0.05, 2101);
    let spec = SynthSpec {
        seed: 2102,
        segments_per_source: 500,
        frames_per_segment: 200,
        sources: vec![SourceSpec {
            label: "GT".into(),
            emitter: Emitter::Lda(LdaEmitter {
                alpha: vec![0.1; 4],
                beta: beta_star,
            }),
        }],
    };
    let out = synthesize(&spec).unwrap();
    let SynthCorpus::Quantized(corpus) = out.corpus else {
        panic!("expected quantized corpus")
    };
    assert_eq!(corpus.segments().len(), 500);
    let config = LdaTrainConfig {
        k: 4,
        seed: 2103,
        ..LdaTrainConfig::default()
    };
    let (_, report) = train(&corpus, &config).unwrap();
    assert!(report.corpus_elbo_trace.len() >= 2);
    for (i, w) in report.corpus_elbo_trace.windows(2).enumerate() {
        assert!(
            w[1] >= w[0] - 1e-8 * w[0].abs(),
            "EM iteration {}: corpus bound dropped {} -> {}",
            i + 1,
            w[0],
            w[1]
        );
    }
    println!(
        "ACCEPTANCE criterion 2 (ELBO monotonicity): PASS — {} EM iterations, bound {:.3} -> {:.3}",
        report.iterations,
        report.corpus_elbo_trace.first().unwrap(),
        report.corpus_elbo_trace.last().unwrap()
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: topic recovery from a corpus sampled with known parameters.
// ---------------------------------------------------------------------------
#[test]
fn criterion_3_topic_recovery() {
    let beta_star = random_topic_matrix(100, 4, 0.05, 1001);
    let spec = SynthSpec {
        seed: 2002,
        segments_per_source: 600,
        frames_per_segment: 200,
        sources: vec![SourceSpec {
            label: "GT".into(),
            emitter: Emitter::Lda(LdaEmitter {
                alpha: vec![0.1; 4],
                beta: beta_star.clone(),
            }),
        }],
    };
    let out = synthesize(&spec).unwrap();
    let SynthCorpus::Quantized(corpus) = out.corpus else {
        panic!("expected quantized corpus")
    };
    let (train_c, test_c) = corpus.split(2.0 / 3.0, 7).unwrap();
    let theta_by_id: HashMap<&str, &Vec<f64>> = corpus
        .segments()
        .iter()
        .zip(out.ground_truth.theta_star.as_ref().unwrap())
        .map(|(s, t)| (s.id(), t))
        .collect();

    let config = LdaTrainConfig {
        k: 4,
        seed: 31,
        em_converge_tol: 1e-8,
        max_em_iters: 400,
        ..LdaTrainConfig::default()
    };
    let (model, _) = train(&train_c, &config).unwrap();
    let matched = match_topics(&model.beta_matrix(), &beta_star).unwrap();
    assert!(
        matched.mean_cosine >= 0.9,
        "matched mean column cosine {} < 0.9",
        matched.mean_cosine
    );

    // held-out domain assignment vs the generating dominant topic
    let posteriors = infer(&test_c, &model, &config.estep_params()).unwrap();
    let mut hits = 0usize;
    let mut eligible = 0usize;
    for (seg, post) in test_c.segments().iter().zip(&posteriors) {
        let theta = theta_by_id[seg.id()];
        let max_theta = theta.iter().cloned().fold(f64::MIN, f64::max);
        if max_theta >= 0.8 {
            eligible += 1;
            let true_topic = theta.iter().position(|&t| t == max_theta).unwrap();
            if matched.permutation[true_topic] == assign_domain(post) {
                hits += 1;
            }
        }
    }
    let accuracy = hits as f64 / eligible as f64;
    assert!(
        accuracy >= 0.9,
        "held-out accuracy {hits}/{eligible} below 90%"
    );
    println!(
        "ACCEPTANCE criterion 3 (topic recovery): PASS — cosine {:.4}, held-out {hits}/{eligible}, alpha {:.4}",
        matched.mean_cosine,
        model.alpha()[0]
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: end-to-end discovery over six Gaussian sources, one bimodal.
// ---------------------------------------------------------------------------
#[test]
fn criterion_4_end_to_end_discovery() {
    let mut sources = vec![
        gaussian_source("RD", vec![0.0, 0.0, 0.0, 0.0]),
        gaussian_source("TV", vec![8.0, 0.0, 0.0, 0.0]),
        gaussian_source("TK", vec![0.0, 8.0, 0.0, 0.0]),
        gaussian_source("MT", vec![0.0, 0.0, 8.0, 0.0]),
        gaussian_source("RS", vec![0.0, 0.0, 0.0, 8.0]),
    ];
    // bimodal source: segments come from one of two far-apart modes
    sources.push(SourceSpec {
        label: "CT".into(),
        emitter: Emitter::Gmm(GmmEmitter {
            dim: 4,
            scope: MixScope::Segment,
            components: vec![
                GmmComponent {
                    weight: 0.5,
                    mean: vec![8.0, 8.0, 0.0, 0.0],
                    std: vec![1.0; 4],
                },
                GmmComponent {
                    weight: 0.5,
                    mean: vec![0.0, 0.0, 8.0, 8.0],
                    std: vec![1.0; 4],
                },
            ],
        }),
    });
    let spec = SynthSpec {
        seed: 4004,
        segments_per_source: 100,
        frames_per_segment: 200,
        sources,
    };
    let out = synthesize(&spec).unwrap();
    let SynthCorpus::Features(features) = out.corpus else {
        panic!("expected feature corpus")
    };
    assert_eq!(features.segments().len(), 600);

    let vq = VqTrainConfig {
        target_v: 2048,
        seed: 5,
        ..VqTrainConfig::default()
    };
    let (codebook, _) = train_codebook(&features, &vq).unwrap();
    let quantized = codebook.quantize_corpus(&features).unwrap();
    let lda = LdaTrainConfig {
        k: 8,
        seed: 77,
        alpha_mode: AlphaMode::Fixed { value: 1.0 },
        em_converge_tol: 1e-6,
        max_em_iters: 150,
        ..LdaTrainConfig::default()
    };
    let (model, _) = train(&quantized, &lda).unwrap();
    let posteriors = infer(&quantized, &model, &lda.estep_params()).unwrap();
    let manifest = DomainManifest::build(&quantized, &posteriors, &model, "acc4", None).unwrap();
    let table = label_domain_table(&manifest, &quantized, MassBasis::Frames).unwrap();

    let mut concentrated = 0usize;
    let mut ct_split_domains = 0usize;
    for (r, label) in table.labels.iter().enumerate() {
        let total = table.row_totals[r];
        let top = (0..table.k)
            .map(|d| table.cell(r, d))
            .fold(f64::MIN, f64::max);
        if label == "CT" {
            ct_split_domains = (0..table.k)
                .filter(|&d| table.cell(r, d) / total >= 0.2)
                .count();
        } else if top / total >= 0.6 {
            concentrated += 1;
        }
    }
    assert!(
        concentrated >= 4,
        "only {concentrated} unimodal sources concentrate >= 60% in one domain:\n{}",
        table.to_tsv()
    );
    assert!(
        ct_split_domains >= 2,
        "bimodal source did not split across >= 2 domains:\n{}",
        table.to_tsv()
    );
    println!(
        "ACCEPTANCE criterion 4 (end-to-end discovery): PASS — {concentrated}/5 sources concentrated, bimodal source over {ct_split_domains} domains"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: consistency grid via the CLI sweep.
// ---------------------------------------------------------------------------
fn latdom() -> Command {
    Command::new(env!("CARGO_BIN_EXE_latdom"))
}

fn run_ok(cmd: &mut Command) {
    let output = cmd.output().expect("command runs");
    assert!(
        output.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

const FOUR_SOURCE_CONFIG: &str = "\
seed = 5005
synth.segments_per_source = 150
synth.frames_per_segment = 200
synth.split_fraction = 0.8
synth.split_seed = 99
synth.source.0.label = A
synth.source.0.component.0.weight = 1.0
synth.source.0.component.0.mean = 0 0 0 0
synth.source.1.label = B
synth.source.1.component.0.weight = 1.0
synth.source.1.component.0.mean = 8 0 0 0
synth.source.2.label = C
synth.source.2.component.0.weight = 1.0
synth.source.2.component.0.mean = 0 8 0 0
synth.source.3.label = D
synth.source.3.component.0.weight = 1.0
synth.source.3.component.0.mean = 0 0 8 0
sweep.v_list = 128 512 2048
sweep.k_list = 4 8 16
lda.seed = 77
lda.alpha_mode = fixed
lda.alpha_value = 1.0
lda.em_converge_tol = 1e-5
lda.max_em_iters = 60
report.basis = frames
report.discount = 0.03
";

#[test]
fn criterion_5_consistency_grid() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.txt");
    std::fs::write(&config_path, FOUR_SOURCE_CONFIG).unwrap();
    let synth_dir = dir.path().join("synth");
    run_ok(
        latdom()
            .args(["synth", "--config"])
            .arg(&config_path)
            .arg("--out")
            .arg(&synth_dir),
    );
    let sweep_dir = dir.path().join("sweep");
    run_ok(
        latdom()
            .args(["sweep", "--config"])
            .arg(&config_path)
            .arg("--features-train")
            .arg(synth_dir.join("features_train.ldfc"))
            .arg("--features-test")
            .arg(synth_dir.join("features_test.ldfc"))
            .arg("--out")
            .arg(&sweep_dir),
    );

    let grid: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sweep_dir.join("grid.json")).unwrap())
            .unwrap();
    let k_values: Vec<u64> = grid["k_values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(k_values, vec![4, 8, 16]);
    let rows = grid["kld"].as_array().unwrap();
    assert_eq!(rows.len(), 3); // V in {128, 512, 2048}
    let mut summary = Vec::new();
    for (vi, row) in rows.iter().enumerate() {
        let cells: Vec<f64> = row
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        for &c in &cells {
            assert!(
                c.is_finite() && c >= 0.0,
                "cell {c} not finite/non-negative"
            );
        }
        // K at the true source count beats K at 4x the true source count
        assert!(
            cells[0] <= cells[2],
            "V row {vi}: KLD(K=4) = {} > KLD(K=16) = {}",
            cells[0],
            cells[2]
        );
        summary.push(format!("{cells:.6?}"));
    }
    println!(
        "ACCEPTANCE criterion 5 (consistency grid): PASS — rows (K=4,8,16): {}",
        summary.join(" | ")
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: VQ correctness against independent oracles.
// ---------------------------------------------------------------------------

/// Plain Lloyd iteration from a given set of initial frame indices.
fn lloyd(frames: &[f64], dim: usize, k: usize, init: &[usize]) -> (Vec<u32>, f64) {
    let n = frames.len() / dim;
    let mut means: Vec<f64> = init
        .iter()
        .flat_map(|&i| frames[i * dim..(i + 1) * dim].to_vec())
        .collect();
    let mut assign = vec![0u32; n];
    for _ in 0..200 {
        let mut changed = false;
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (fi, frame) in frames.chunks_exact(dim).enumerate() {
            let mut best = f64::INFINITY;
            let mut best_j = 0u32;
            for (j, mean) in means.chunks_exact(dim).enumerate() {
                let d2: f64 = frame.iter().zip(mean).map(|(x, m)| (x - m) * (x - m)).sum();
                if d2 < best {
                    best = d2;
                    best_j = j as u32;
                }
            }
            if assign[fi] != best_j {
                changed = true;
                assign[fi] = best_j;
            }
            counts[best_j as usize] += 1;
            for d in 0..dim {
                sums[best_j as usize * dim + d] += frame[d];
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for d in 0..dim {
                    means[j * dim + d] = sums[j * dim + d] / counts[j] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut total = 0.0;
    for (fi, frame) in frames.chunks_exact(dim).enumerate() {
        let mean = &means[assign[fi] as usize * dim..(assign[fi] as usize + 1) * dim];
        total += frame
            .iter()
            .zip(mean)
            .map(|(x, m)| (x - m) * (x - m))
            .sum::<f64>();
    }
    (assign, total / n as f64)
}

fn canonical_partition(assign: &[u32]) -> Vec<Vec<usize>> {
    let mut groups: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, &a) in assign.iter().enumerate() {
        groups.entry(a).or_default().push(i);
    }
    let mut partition: Vec<Vec<usize>> = groups.into_values().collect();
    partition.sort();
    partition
}

#[test]
fn criterion_6_vq_correctness() {
    // (a) mix-up training vs a multi-restart Lloyd oracle on 100 frames, V=4
    let centers = [[0.0f64, 0.0], [10.0, 1.0], [3.0, 12.0], [13.0, 9.0]];
    let mut rng = Lcg(0x6001);
    let mut frames64 = Vec::new();
    let mut frames32 = Vec::new();
    for c in &centers {
        for _ in 0..25 {
            let x = c[0] + rng.unit() - 0.5;
            let y = c[1] + rng.unit() - 0.5;
            // keep f32/f64 views bit-consistent
            let (xf, yf) = (x as f32, y as f32);
            frames32.extend_from_slice(&[xf, yf]);
            frames64.extend_from_slice(&[xf as f64, yf as f64]);
        }
    }
    let corpus = FeatureCorpus::new(vec![
        FeatureSegment::new("s0", None, 2, frames32.clone()).unwrap()
    ])
    .unwrap();
    let config = VqTrainConfig {
        target_v: 4,
        normalize: false,
        ..VqTrainConfig::default()
    };
    let (codebook, report) = train_codebook(&corpus, &config).unwrap();
    let mut oracle_best: Option<(Vec<u32>, f64)> = None;
    for _ in 0..200 {
        let mut init = Vec::new();
        while init.len() < 4 {
            let i = rng.range(0, 99);
            if !init.contains(&i) {
                init.push(i);
            }
        }
        let (assign, distortion) = lloyd(&frames64, 2, 4, &init);
        if oracle_best.as_ref().is_none_or(|(_, d)| distortion < *d) {
            oracle_best = Some((assign, distortion));
        }
    }
    let (oracle_assign, oracle_distortion) = oracle_best.unwrap();
    assert_eq!(
        canonical_partition(&report.final_assignments),
        canonical_partition(&oracle_assign),
        "mix-up training and the Lloyd oracle disagree on the partition"
    );
    assert!((codebook.training_distortion() - oracle_distortion).abs() < 1e-6);

    // (b) quantize_frame vs a linear-scan oracle on 1e5 random frames
    let dim = 8usize;
    let v = 64usize;
    let means: Vec<f32> = (0..v * dim)
        .map(|_| (rng.unit() * 10.0 - 5.0) as f32)
        .collect();
    let oracle_scan = |frame: &[f32]| -> u32 {
        let mut best = f64::INFINITY;
        let mut best_j = 0u32;
        for j in 0..v {
            let mut acc = 0.0f64;
            for d in 0..dim {
                let t = frame[d] as f64 - means[j * dim + d] as f64;
                acc += t * t;
            }
            if acc < best {
                best = acc;
                best_j = j as u32;
            }
        }
        best_j
    };
    let cb = latdom_core::codebook::Codebook::from_parts(v as u32, dim, means.clone(), None, 0.0)
        .unwrap();
    let mut checked = 0usize;
    let mut frame = vec![0.0f32; dim];
    for _ in 0..100_000 {
        for x in frame.iter_mut() {
            *x = (rng.unit() * 12.0 - 6.0) as f32;
        }
        assert_eq!(cb.quantize_frame(&frame).unwrap(), oracle_scan(&frame));
        checked += 1;
    }

    // (c) distortion monotone per EM iteration and across V doublings
    let mut random_frames = Vec::new();
    for _ in 0..5000 * 3 {
        random_frames.push((rng.unit() * 4.0 - 2.0) as f32);
    }
    let random_corpus = FeatureCorpus::new(vec![
        FeatureSegment::new("r", None, 3, random_frames).unwrap()
    ])
    .unwrap();
    let (_, trace_report) = train_codebook(
        &random_corpus,
        &VqTrainConfig {
            target_v: 64,
            ..VqTrainConfig::default()
        },
    )
    .unwrap();
    for level in &trace_report.levels {
        for w in level.distortions.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9,
                "V={}: distortion rose {} -> {}",
                level.v,
                w[0],
                w[1]
            );
        }
    }
    let mut prev = f64::INFINITY;
    for target in [1u32, 2, 4, 8, 16, 32, 64] {
        let (cb, _) = train_codebook(
            &random_corpus,
            &VqTrainConfig {
                target_v: target,
                ..VqTrainConfig::default()
            },
        )
        .unwrap();
        assert!(
            cb.training_distortion() <= prev + 1e-12,
            "distortion rose at V={target}"
        );
        prev = cb.training_distortion();
    }
    println!(
        "ACCEPTANCE criterion 6 (VQ correctness): PASS — oracle partition matched, {checked} quantizations agree, distortion monotone"
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: metric exactness.
// ---------------------------------------------------------------------------
#[test]
fn criterion_7_metric_exactness() {
    let dist = |counts: Vec<f64>| DomainDistribution {
        counts,
        basis: MassBasis::Segments,
    };
    assert_eq!(
        smooth(&dist(vec![1.0, 0.0]), 0.03).unwrap(),
        vec![0.97, 0.03]
    );
    let p = [0.1, 0.4, 0.5];
    assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    // hand-derived: 0.97·ln(1.94) + 0.03·ln(0.06)
    let sp = smooth(&dist(vec![1.0, 0.0]), 0.03).unwrap();
    let hand = 0.97f64 * 1.94f64.ln() + 0.03f64 * 0.06f64.ln();
    let got = kl_divergence(&sp, &[0.5, 0.5]).unwrap();
    assert!((got - hand).abs() < 1e-9, "got {got}, hand value {hand}");

    let mut rng = Lcg(0x7001);
    let mut worst = f64::INFINITY;
    for _ in 0..10_000 {
        let k = rng.range(2, 16);
        let draw = |rng: &mut Lcg| -> Vec<f64> {
            (0..k)
                .map(|_| {
                    if rng.unit() < 0.25 {
                        0.0
                    } else {
                        rng.unit() * 100.0
                    }
                })
                .collect()
        };
        let mut a = draw(&mut rng);
        let mut b = draw(&mut rng);
        if a.iter().sum::<f64>() == 0.0 {
            a[0] = 1.0;
        }
        if b.iter().sum::<f64>() == 0.0 {
            b[1 % k] = 1.0;
        }
        let p = smooth(&dist(a), 0.03).unwrap();
        let q = smooth(&dist(b), 0.03).unwrap();
        let kld = kl_divergence(&p, &q).unwrap();
        assert!(kld >= -1e-12, "negative divergence {kld}");
        worst = worst.min(kld);
    }
    println!(
        "ACCEPTANCE criterion 7 (metric exactness): PASS — hand value {hand:.9}, min KLD over 1e4 pairs {worst:.3e}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: byte-identical CLI reruns and manifest invariants.
// ---------------------------------------------------------------------------
const REPRO_CONFIG: &str = "\
seed = 42
vq.target_v = 16
lda.k = 3
lda.max_em_iters = 40
lda.alpha_mode = fixed
lda.alpha_value = 0.5
sweep.v_list = 8 16
sweep.k_list = 2 3
synth.segments_per_source = 30
synth.frames_per_segment = 40
synth.split_fraction = 0.8
synth.source.0.label = RD
synth.source.0.component.0.weight = 1.0
synth.source.0.component.0.mean = 0 0 6
synth.source.1.label = CT
synth.source.1.component.0.weight = 1.0
synth.source.1.component.0.mean = 6 0 0
synth.source.2.label = MT
synth.source.2.component.0.weight = 1.0
synth.source.2.component.0.mean = 0 6 0
";

fn run_pipeline(config: &Path, base: &Path) -> Vec<PathBuf> {
    let synth = base.join("synth");
    run_ok(
        latdom()
            .args(["synth", "--config"])
            .arg(config)
            .arg("--out")
            .arg(&synth),
    );
    let cb = base.join("cb");
    run_ok(
        latdom()
            .args(["train-codebook", "--config"])
            .arg(config)
            .arg("--features")
            .arg(synth.join("features_train.ldfc"))
            .arg("--out")
            .arg(&cb),
    );
    let qtrain = base.join("qtrain");
    run_ok(
        latdom()
            .args(["quantize", "--config"])
            .arg(config)
            .arg("--features")
            .arg(synth.join("features_train.ldfc"))
            .arg("--codebook")
            .arg(cb.join("codebook.ldcb"))
            .arg("--out")
            .arg(&qtrain),
    );
    let qtest = base.join("qtest");
    run_ok(
        latdom()
            .args(["quantize", "--config"])
            .arg(config)
            .arg("--features")
            .arg(synth.join("features_test.ldfc"))
            .arg("--codebook")
            .arg(cb.join("codebook.ldcb"))
            .arg("--out")
            .arg(&qtest),
    );
    let lda = base.join("lda");
    run_ok(
        latdom()
            .args(["train-lda", "--config"])
            .arg(config)
            .arg("--quantized")
            .arg(qtrain.join("quantized.ldqc"))
            .arg("--out")
            .arg(&lda),
    );
    let inferred = base.join("infer");
    run_ok(
        latdom()
            .args(["infer", "--config"])
            .arg(config)
            .arg("--quantized")
            .arg(qtest.join("quantized.ldqc"))
            .arg("--model")
            .arg(lda.join("model.ldam"))
            .args(["--name", "test_manifest.tsv"])
            .arg("--out")
            .arg(&inferred),
    );
    let report = base.join("report");
    run_ok(
        latdom()
            .args(["report", "--config"])
            .arg(config)
            .arg("--train-manifest")
            .arg(lda.join("train_manifest.tsv"))
            .arg("--test-manifest")
            .arg(inferred.join("test_manifest.tsv"))
            .arg("--train-corpus")
            .arg(qtrain.join("quantized.ldqc"))
            .arg("--test-corpus")
            .arg(qtest.join("quantized.ldqc"))
            .arg("--out")
            .arg(&report),
    );
    let sweep = base.join("sweep");
    run_ok(
        latdom()
            .args(["sweep", "--config"])
            .arg(config)
            .arg("--features-train")
            .arg(synth.join("features_train.ldfc"))
            .arg("--features-test")
            .arg(synth.join("features_test.ldfc"))
            .arg("--out")
            .arg(&sweep),
    );
    vec![
        synth.join("features.ldfc"),
        synth.join("features_train.ldfc"),
        synth.join("features_test.ldfc"),
        synth.join("truth.json"),
        cb.join("codebook.ldcb"),
        qtrain.join("quantized.ldqc"),
        qtest.join("quantized.ldqc"),
        lda.join("model.ldam"),
        lda.join("train_manifest.tsv"),
        inferred.join("test_manifest.tsv"),
        report.join("label_domain_train.tsv"),
        report.join("label_domain_test.tsv"),
        report.join("kld_summary.json"),
        sweep.join("grid.tsv"),
        sweep.join("grid.json"),
        sweep.join("V8_K2/model.ldam"),
        sweep.join("V8_K2/train_manifest.tsv"),
        sweep.join("V16_K3/test_manifest.tsv"),
    ]
}

#[test]
fn criterion_8_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.txt");
    std::fs::write(&config, REPRO_CONFIG).unwrap();
    let first = run_pipeline(&config, &dir.path().join("a"));
    let second = run_pipeline(&config, &dir.path().join("b"));
    let mut compared = 0usize;
    for (a, b) in first.iter().zip(&second) {
        let bytes_a = std::fs::read(a).unwrap_or_else(|_| panic!("missing {}", a.display()));
        let bytes_b = std::fs::read(b).unwrap_or_else(|_| panic!("missing {}", b.display()));
        assert_eq!(bytes_a, bytes_b, "rerun differs for {}", a.display());
        compared += 1;
    }
    // every emitted manifest satisfies the gamma/argmax invariant
    let mut manifests = 0usize;
    for path in &first {
        if path.extension().is_some_and(|e| e == "tsv")
            && path
                .file_name()
                .is_some_and(|n| n.to_string_lossy().contains("manifest"))
        {
            let manifest = DomainManifest::read_tsv(path).expect("manifest loads and validates");
            manifest.validate().expect("gamma/argmax invariant");
            manifests += 1;
        }
    }
    assert!(manifests >= 3);
    println!(
        "ACCEPTANCE criterion 8 (reproducibility): PASS — {compared} primary outputs byte-identical, {manifests} manifests validated"
    );
}

// ---------------------------------------------------------------------------
// The full published grid at desk scale. Heavy; run explicitly with
// `cargo test -p latdom-cli --test acceptance -- --ignored`.
// ---------------------------------------------------------------------------
#[test]
#[ignore = "takes tens of minutes; the 3x3 grid above covers the machinery"]
fn full_grid_completes() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.txt");
    let config = FOUR_SOURCE_CONFIG
        .replace(
            "sweep.v_list = 128 512 2048",
            "sweep.v_list = 128 512 2048 8192",
        )
        .replace("sweep.k_list = 4 8 16", "sweep.k_list = 4 8 16 32 64");
    std::fs::write(&config_path, config).unwrap();
    let synth_dir = dir.path().join("synth");
    run_ok(
        latdom()
            .args(["synth", "--config"])
            .arg(&config_path)
            .arg("--out")
            .arg(&synth_dir),
    );
    let sweep_dir = dir.path().join("sweep");
    run_ok(
        latdom()
            .args(["sweep", "--config"])
            .arg(&config_path)
            .arg("--features-train")
            .arg(synth_dir.join("features_train.ldfc"))
            .arg("--features-test")
            .arg(synth_dir.join("features_test.ldfc"))
            .arg("--out")
            .arg(&sweep_dir),
    );
    let grid = std::fs::read_to_string(sweep_dir.join("grid.tsv")).unwrap();
    assert_eq!(grid.lines().count(), 5); // header + 4 V rows
}
