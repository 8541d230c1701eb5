//! End-to-end acceptance suite. Each test covers one contract of the
//! toolkit and prints a single PASS line; a failure panics with detail.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use maskid_core::data::{
    self, build_dev_augmented, build_test_conditions, plan_dev_augmented, stats, synth_toy_corpus,
    verification_trials, Manifest, NoiseCategory, NoisePool, Split, SynthConfig,
    DEV_SNR_LINEAR_MAX,
};
use maskid_core::dsp::{self, Matrix, Snr, Spectrogram, StftConfig, Waveform};
use maskid_core::eval::{self, DcfParams, Enhancer, ScoreSet, ScoredTrial};
use maskid_core::models::{
    checks::{DaeUnderL2, MaskedVerifierUnderCe, VerifierUnderCe},
    Dae, DaeConfig, Masker, MaskerConfig, Verifier, VerifierConfig,
    FEATURE_COMPRESSION,
};
use maskid_core::nn::{
    checkpoint,
    gradcheck::{max_fd_rel_err, max_fd_rel_err_eps, GradCheckable, GraphUnderLoss, KINK_MARGIN},
    receptive_field, Graph, LayerSpec, Padding, Tensor,
};
use maskid_core::training::{
    load_pairs, select_best, train_dae, train_masker, train_verifier, DaeTrainConfig,
    MaskerTrainConfig, RunDir, VerifierTrainConfig,
};

fn pass(msg: &str) {
    println!("[PASS] {}", msg);
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

// ---------------------------------------------------------------- criterion 1

/// Analytic gradients match central finite differences for every layer kind
/// and for all three full networks under their training losses.
#[test]
fn gradients_match_finite_differences_everywhere() {
    // Per-layer-kind graphs under a smooth random linear readout.
    let layer_kinds: Vec<(&str, Vec<LayerSpec>, Vec<usize>)> = vec![
        (
            "conv1d",
            vec![LayerSpec::Conv1d {
                in_ch: 3,
                out_ch: 4,
                kernel: 3,
                stride: 2,
                padding: Padding::Valid,
            }],
            vec![3, 11],
        ),
        (
            "conv2d_dilated",
            vec![LayerSpec::Conv2d {
                in_ch: 2,
                out_ch: 2,
                kernel: (3, 3),
                dilation: (2, 3),
                padding: Padding::SameZero,
            }],
            vec![2, 9, 12],
        ),
        (
            "linear",
            vec![LayerSpec::Linear {
                in_dim: 6,
                out_dim: 4,
            }],
            vec![6],
        ),
        (
            "relu",
            vec![
                LayerSpec::Linear {
                    in_dim: 5,
                    out_dim: 5,
                },
                LayerSpec::Relu,
                LayerSpec::Linear {
                    in_dim: 5,
                    out_dim: 3,
                },
            ],
            vec![5],
        ),
        (
            "sigmoid",
            vec![
                LayerSpec::Linear {
                    in_dim: 5,
                    out_dim: 4,
                },
                LayerSpec::Sigmoid,
            ],
            vec![5],
        ),
        (
            "global_avg_pool",
            vec![
                LayerSpec::Conv1d {
                    in_ch: 2,
                    out_ch: 3,
                    kernel: 3,
                    stride: 1,
                    padding: Padding::Valid,
                },
                LayerSpec::Relu,
                LayerSpec::GlobalAvgPool,
            ],
            vec![2, 10],
        ),
        (
            "tdnn_splice",
            vec![
                LayerSpec::TdnnSplice {
                    offsets: vec![-2, 0, 2],
                },
                LayerSpec::Conv1d {
                    in_ch: 9,
                    out_ch: 4,
                    kernel: 1,
                    stride: 1,
                    padding: Padding::Valid,
                },
            ],
            vec![3, 8],
        ),
    ];
    for (name, specs, in_shape) in &layer_kinds {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut under = loop {
                let graph = Graph::build("g", specs, seed).unwrap();
                let input = rand_tensor(in_shape, &mut rng);
                let mut under = GraphUnderLoss::new(graph, input, &mut rng).unwrap();
                if under.kink_distance().unwrap() > KINK_MARGIN {
                    break under;
                }
            };
            let err = max_fd_rel_err(&mut under, 30, &mut rng).unwrap();
            assert!(err < 1e-4, "{} seed {}: rel err {}", name, seed, err);
        }
    }

    // Full networks under their actual losses. Composite nets have too many
    // ReLU units for a fixed clearance; take the clearest of many inputs and
    // scale the difference step to it.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let frames = 14usize;

    fn check_adaptive<M: GradCheckable>(under: &mut M, what: &str, rng: &mut ChaCha8Rng) {
        let dist = under.kink_distance().unwrap();
        let eps = (dist / 50.0).clamp(1e-7, 1e-4);
        let err = max_fd_rel_err_eps(under, 30, eps, rng).unwrap();
        assert!(err < 1e-4, "{}: rel err {} (eps {})", what, err, eps);
    }

    let verifier_cfg = VerifierConfig {
        n_speakers: 3,
        n_bins: 9,
        conv_filters: [4, 4, 4, 5],
        fc1_dim: 5,
        embedding_dim: 4,
        seed: 3,
    };
    let mut best: Option<(f64, VerifierUnderCe)> = None;
    for _ in 0..100 {
        let mut c = VerifierUnderCe {
            verifier: Verifier::build(verifier_cfg.clone()).unwrap(),
            input: Tensor::from_vec(
                &[9, frames],
                (0..9 * frames).map(|_| rng.gen_range(0.3..1.3)).collect(),
            )
            .unwrap(),
            label: 2,
        };
        let d = c.kink_distance().unwrap();
        if best.as_ref().map_or(true, |(bd, _)| d > *bd) {
            best = Some((d, c));
        }
    }
    check_adaptive(&mut best.unwrap().1, "verifier under CE", &mut rng);

    let mut best: Option<(f64, MaskedVerifierUnderCe)> = None;
    for _ in 0..100 {
        let mut c = MaskedVerifierUnderCe {
            masker: Masker::build(MaskerConfig {
                filters: 2,
                n_bins: 9,
                literal_5x5: false,
                seed: 5,
            })
            .unwrap(),
            verifier: Verifier::build(verifier_cfg.clone()).unwrap(),
            input: Tensor::from_vec(
                &[9, frames],
                (0..9 * frames).map(|_| rng.gen_range(0.3..1.3)).collect(),
            )
            .unwrap(),
            label: 1,
        };
        let d = c.kink_distance().unwrap();
        if best.as_ref().map_or(true, |(bd, _)| d > *bd) {
            best = Some((d, c));
        }
    }
    check_adaptive(&mut best.unwrap().1, "masker+frozen verifier under CE", &mut rng);

    let mut dae_check = DaeUnderL2 {
        dae: Dae::build(DaeConfig {
            hidden: 6,
            n_bins: 7,
            seed: 11,
        })
        .unwrap(),
        input: rand_tensor(&[7, 30], &mut rng),
        target: rand_tensor(&[7, 30], &mut rng),
    };
    check_adaptive(&mut dae_check, "autoencoder under L2", &mut rng);

    pass("criterion 1: gradients match finite differences for every layer kind and all three networks");
}

// ---------------------------------------------------------------- criterion 2

fn oracle_rates(targets: &[f64], nontargets: &[f64], th: f64) -> (f64, f64) {
    let miss = targets.iter().filter(|&&s| s < th).count() as f64 / targets.len() as f64;
    let fa = nontargets.iter().filter(|&&s| s >= th).count() as f64 / nontargets.len() as f64;
    (miss, fa)
}

fn eer_oracle(set: &ScoreSet) -> f64 {
    let targets: Vec<f64> = set.trials.iter().filter(|t| t.target).map(|t| t.score).collect();
    let nontargets: Vec<f64> =
        set.trials.iter().filter(|t| !t.target).map(|t| t.score).collect();
    let mut ths: Vec<f64> = targets.iter().chain(nontargets.iter()).copied().collect();
    ths.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut points = vec![(0.0, 1.0)];
    for &th in &ths {
        points.push(oracle_rates(&targets, &nontargets, th));
    }
    points.push((1.0, 0.0));
    for w in points.windows(2) {
        let d0 = w[0].1 - w[0].0;
        let d1 = w[1].1 - w[1].0;
        if d0 == 0.0 {
            return w[0].0;
        }
        if d0 > 0.0 && d1 <= 0.0 {
            if d1 == 0.0 {
                return w[1].0;
            }
            let t = d0 / (d0 - d1);
            return w[0].0 + t * (w[1].0 - w[0].0);
        }
    }
    unreachable!("no equal-error crossing")
}

fn min_dcf_oracle(set: &ScoreSet, params: &DcfParams) -> f64 {
    let targets: Vec<f64> = set.trials.iter().filter(|t| t.target).map(|t| t.score).collect();
    let nontargets: Vec<f64> =
        set.trials.iter().filter(|t| !t.target).map(|t| t.score).collect();
    let mut ths: Vec<f64> = targets.iter().chain(nontargets.iter()).copied().collect();
    ths.push(f64::NEG_INFINITY);
    ths.push(f64::INFINITY);
    let mut best = f64::INFINITY;
    for &th in &ths {
        let (miss, fa) = oracle_rates(&targets, &nontargets, th);
        best = best
            .min(params.c_miss * miss * params.p_target + params.c_fa * fa * (1.0 - params.p_target));
    }
    let norm = (params.c_miss * params.p_target).min(params.c_fa * (1.0 - params.p_target));
    (best / norm).min(1.0)
}

/// EER and minDCF agree exactly with brute-force counting oracles over
/// randomized score sets with overlap and duplicate scores.
#[test]
fn metrics_agree_exactly_with_counting_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for case in 0..100 {
        let n = 200;
        let mut trials = Vec::with_capacity(n);
        for i in 0..n / 2 {
            // Coarse quantization forces duplicated scores.
            let t = (rng.gen_range(-1.0..1.5f64) * 8.0).round() / 8.0;
            let nt = (rng.gen_range(-1.5..1.0f64) * 8.0).round() / 8.0;
            trials.push(ScoredTrial {
                utt_a: format!("a{}", i),
                utt_b: format!("b{}", i),
                score: t,
                target: true,
            });
            trials.push(ScoredTrial {
                utt_a: format!("c{}", i),
                utt_b: format!("d{}", i),
                score: nt,
                target: false,
            });
        }
        let set = ScoreSet::new(trials).unwrap();
        assert_eq!(eval::eer(&set).unwrap(), eer_oracle(&set), "case {}", case);
        for prior in [0.01, 0.001] {
            let params = DcfParams::with_prior(prior).unwrap();
            assert_eq!(
                eval::min_dcf(&set, &params).unwrap(),
                min_dcf_oracle(&set, &params),
                "case {} prior {}",
                case,
                prior
            );
        }
    }
    pass("criterion 2: EER and minDCF agree exactly with independent counting oracles (100 random sets)");
}

// ---------------------------------------------------------------- criterion 3

/// Core DSP invariants: analysis/synthesis round trip, compression round
/// trip, and exact achieved SNR in mixing.
#[test]
fn dsp_round_trips_and_snr_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let cfg = StftConfig::default();
    let n = 16_000 + 731;
    let clean = Waveform::new(
        (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        16_000,
    )
    .unwrap();

    // STFT -> ISTFT with the original phase reconstructs the waveform.
    // Edges lack full overlap, so measure one window in from both ends; the
    // analysis also drops the tail samples that don't fill a whole frame.
    let spec = dsp::stft(&clean, &cfg).unwrap();
    let rec = dsp::istft_with_phase(&spec.magnitude, &spec.phase, &cfg, 16_000).unwrap();
    assert!(rec.len() <= clean.len() && clean.len() - rec.len() < 400);
    let (mut sig, mut err) = (0.0f64, 0.0f64);
    for i in 400..rec.len() - 400 {
        sig += clean.samples[i] * clean.samples[i];
        let d = clean.samples[i] - rec.samples[i];
        err += d * d;
    }
    let snr_db = 10.0 * (sig / err).log10();
    assert!(snr_db > 50.0, "interior reconstruction only {} dB", snr_db);

    // Power-law compression inverts cleanly.
    let raw = Spectrogram {
        values: spec.magnitude.clone(),
        compression_exponent: 1.0,
    };
    let compressed = dsp::compress(&raw, FEATURE_COMPRESSION).unwrap();
    let restored = dsp::decompress(&compressed, FEATURE_COMPRESSION).unwrap();
    let comp_err = raw
        .values
        .data
        .iter()
        .zip(restored.values.data.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(comp_err < 1e-10, "compression round-trip error {}", comp_err);

    // Mixing hits the requested SNR exactly (measured on the added noise).
    let noise = Waveform::new(
        (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        16_000,
    )
    .unwrap();
    for snr_db in [-5.0, 0.0, 7.3, 20.0] {
        let mixed = dsp::mix_at_snr(&clean, &noise, Snr::Db(snr_db)).unwrap();
        let p_clean: f64 = clean.samples.iter().map(|s| s * s).sum();
        let p_added: f64 = mixed
            .samples
            .iter()
            .zip(clean.samples.iter())
            .map(|(m, c)| (m - c) * (m - c))
            .sum();
        let achieved = 10.0 * (p_clean / p_added).log10();
        assert!(
            (achieved - snr_db).abs() < 1e-9,
            "requested {} dB, achieved {} dB",
            snr_db,
            achieved
        );
    }
    pass("criterion 3: STFT/compression round trips are numerically tight and mixing hits requested SNR exactly");
}

// ---------------------------------------------------------------- criterion 4

/// The full mask network sees (127, 71) frequency x time context with the
/// default middle kernels and (127, 83) with literal 5x5 middle kernels; the
/// autoencoder sees 25 frames.
#[test]
fn receptive_fields_match_the_architecture() {
    let default = MaskerConfig::full(0);
    assert_eq!(default.receptive_field(), (127, 71));
    let mut literal = MaskerConfig::full(0);
    literal.literal_5x5 = true;
    assert_eq!(literal.receptive_field(), (127, 83));
    // Toy scaling changes widths, never the geometry.
    assert_eq!(MaskerConfig::toy(0).receptive_field(), (127, 71));

    let dae = Dae::build(DaeConfig::toy(0)).unwrap();
    let (_, t_ctx) = receptive_field(&dae.graph.specs());
    assert_eq!(t_ctx, 25);
    pass("criterion 4: receptive fields are (127, 71) default, (127, 83) literal-5x5, 25-frame autoencoder context");
}

// ---------------------------------------------------------------- criterion 5

/// Mask-network training must never change the frozen verifier: parameter
/// bits and the checkpoint file stay identical.
#[test]
fn frozen_verifier_is_bit_identical_after_masker_training() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_toy_corpus(
        &SynthConfig {
            n_speakers: 4,
            utts_per_speaker: 3,
            utt_seconds: 1.2,
            seed: 55,
        },
        dir.path(),
    )
    .unwrap();
    let stft = StftConfig::default();

    let vrun = RunDir::create(&dir.path().join("vrun")).unwrap();
    let vcfg = VerifierTrainConfig {
        epochs: 1,
        batch_size: 4,
        step_size: 1e-3,
        clip_norm: None,
        segment_frames: 80,
        val_pairs: 10,
        seed: 5,
    };
    let vout = train_verifier(
        VerifierConfig::toy(2, 5),
        &vcfg,
        &corpus.dev,
        &corpus.dev,
        &stft,
        &vrun,
    )
    .unwrap();

    let bytes_before = std::fs::read(&vout.selected_checkpoint).unwrap();
    let hash_before = checkpoint::sha256_hex(&vout.selected_checkpoint).unwrap();
    let params_before: Vec<Vec<u64>> = {
        let mut v = Verifier::load(&vout.selected_checkpoint).unwrap();
        v.params_mut()
            .iter()
            .map(|p| p.value.data.iter().map(|x| x.to_bits()).collect())
            .collect()
    };

    let mrun = RunDir::create(&dir.path().join("mrun")).unwrap();
    let mcfg = MaskerTrainConfig {
        epochs: 1,
        batch_size: 4,
        step_size: 1e-3,
        clip_norm: None,
        segment_frames: 80,
        val_pairs: 10,
        seed: 6,
    };
    train_masker(
        MaskerConfig::toy(6),
        &mcfg,
        &corpus.dev,
        &corpus.dev,
        &vout.selected_checkpoint,
        &stft,
        &mrun,
    )
    .unwrap();

    let bytes_after = std::fs::read(&vout.selected_checkpoint).unwrap();
    assert_eq!(
        hash_before,
        checkpoint::sha256_hex(&vout.selected_checkpoint).unwrap()
    );
    assert_eq!(bytes_before, bytes_after);
    let params_after: Vec<Vec<u64>> = {
        let mut v = Verifier::load(&vout.selected_checkpoint).unwrap();
        v.params_mut()
            .iter()
            .map(|p| p.value.data.iter().map(|x| x.to_bits()).collect())
            .collect()
    };
    assert_eq!(params_before, params_after);
    pass("criterion 5: the frozen verifier is bit-identical after mask-network training");
}

// ---------------------------------------------------------------- criterion 6

/// The autoencoder's two-phase schedule is reproduced exactly: constant 0.05
/// in phase 1, 0.00375 * 0.75^epoch in phase 2, restart from the phase-1
/// dev-L2 argmin, final selection over both phases.
#[test]
fn dae_training_schedule_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut mk = |seed_shift: f64| -> Vec<maskid_core::training::FeaturePair> {
        (0..4)
            .map(|_| {
                let vals: Vec<f64> = (0..6 * 40)
                    .map(|_| rng.gen_range(0.0..1.0) + seed_shift)
                    .collect();
                let m = Matrix::from_vec(6, 40, vals).unwrap();
                maskid_core::training::FeaturePair {
                    input: Spectrogram {
                        values: m.clone(),
                        compression_exponent: FEATURE_COMPRESSION,
                    },
                    target: Spectrogram {
                        values: m,
                        compression_exponent: FEATURE_COMPRESSION,
                    },
                }
            })
            .collect()
    };
    let train = mk(0.0);
    let dev = mk(0.1);
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path()).unwrap();
    let cfg = DaeTrainConfig {
        phase1_epochs: 3,
        phase2_epochs: 4,
        seed: 9,
        ..DaeTrainConfig::default()
    };
    let out = train_dae(
        DaeConfig {
            hidden: 8,
            n_bins: 6,
            seed: 1,
        },
        &cfg,
        &train,
        &dev,
        &run,
    )
    .unwrap();

    let metrics = run.read_metrics().unwrap();
    assert_eq!(metrics.len(), 7);
    for r in &metrics {
        match r.phase {
            1 => assert_eq!(r.step_size, 0.05),
            2 => assert_eq!(r.step_size, 0.00375 * 0.75f64.powi(r.epoch as i32)),
            p => panic!("unexpected phase {}", p),
        }
    }
    let p1: Vec<f64> = metrics
        .iter()
        .filter(|r| r.phase == 1)
        .map(|r| r.criterion_value)
        .collect();
    assert!(Dae::load(&run.checkpoint_path(1, select_best(&p1).unwrap())).is_ok());
    let all: Vec<f64> = metrics.iter().map(|r| r.criterion_value).collect();
    assert_eq!(select_best(&all), Some(out.best_epoch));
    pass("criterion 6: autoencoder schedule (0.05 then 0.00375*0.75^e, restart at phase-1 argmin) is exact");
}

// ---------------------------------------------------------------- criterion 7

fn eer_under(
    verifier: &mut Verifier,
    enhancer: &mut Enhancer,
    trials: &[eval::Trial],
    manifest: &data::Manifest,
    stft: &StftConfig,
) -> f64 {
    let audio = data::audio_index(manifest);
    let mut cache = eval::EmbeddingCache::new();
    let set = eval::score_trials(verifier, enhancer, trials, &audio, stft, &mut cache).unwrap();
    eval::eer(&set).unwrap()
}

/// Splits a manifest per speaker: the first `train_per_spk` utterances of
/// every speaker go to the training half, the rest to the held-out half.
fn split_by_utterance(m: &Manifest, train_per_spk: usize) -> (Manifest, Manifest) {
    let mut by_spk: BTreeMap<&str, Vec<&data::ManifestEntry>> = BTreeMap::new();
    for e in &m.entries {
        by_spk.entry(e.speaker_id.as_str()).or_default().push(e);
    }
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (_, mut utts) in by_spk {
        utts.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
        for (i, e) in utts.into_iter().enumerate() {
            if i < train_per_spk {
                train.push(e.clone());
            } else {
                held.push(e.clone());
            }
        }
    }
    (
        Manifest { split: m.split, entries: train },
        Manifest { split: m.split, entries: held },
    )
}

/// The whole pipeline on a synthetic corpus: the verifier separates speakers
/// on clean held-out utterances, heavy noise degrades it substantially, the
/// mask network recovers a large part of that loss without hurting clean
/// speech much, and the autoencoder baseline trains.
#[test]
fn toy_end_to_end_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_toy_corpus(
        &SynthConfig {
            n_speakers: 20,
            utts_per_speaker: 8,
            utt_seconds: 3.0,
            seed: 77,
        },
        dir.path(),
    )
    .unwrap();
    let stft = StftConfig::default();
    // Six utterances per speaker train the models; the last two of each
    // speaker are never seen in training and carry all verification trials.
    let (train_m, eval_m) = split_by_utterance(&corpus.dev, 6);
    let trials = verification_trials(&eval_m, 120, 7).unwrap();

    // Verifier pre-training on clean training speech.
    let vrun = RunDir::create(&dir.path().join("vrun")).unwrap();
    let vcfg = VerifierTrainConfig {
        epochs: 60,
        batch_size: 4,
        step_size: 2e-3,
        clip_norm: None,
        segment_frames: 150,
        val_pairs: 60,
        seed: 1,
    };
    let vout = train_verifier(
        VerifierConfig::toy(2, 1),
        &vcfg,
        &train_m,
        &train_m,
        &stft,
        &vrun,
    )
    .unwrap();
    let mut verifier = Verifier::load(&vout.selected_checkpoint).unwrap();

    let clean_eer = eer_under(&mut verifier, &mut Enhancer::None, &trials, &eval_m, &stft);
    assert!(clean_eer < 0.05, "clean EER {} >= 5%", clean_eer);

    // Condition grid over the held-out utterances; 0 dB noise is the probe.
    let cells_dir = dir.path().join("cells");
    let cells = build_test_conditions(
        &eval_m,
        &corpus.test_pool,
        Some(&corpus.dev_pool),
        3,
        &cells_dir,
    )
    .unwrap();
    let noisy0 = cells
        .iter()
        .find(|(c, _)| c.category == NoiseCategory::Noise && c.snr_db == Some(0.0))
        .map(|(_, m)| m.clone())
        .unwrap();

    let noisy_eer = eer_under(&mut verifier, &mut Enhancer::None, &trials, &noisy0, &stft);
    assert!(
        noisy_eer >= 2.0 * clean_eer.max(0.005),
        "0 dB noise did not degrade: clean {} noisy {}",
        clean_eer,
        noisy_eer
    );

    // Mask network trained on corrupted dev speech through the frozen
    // verifier's cross-entropy.
    let (dev_aug, _) =
        build_dev_augmented(&train_m, &corpus.dev_pool, 11, &dir.path().join("dev_aug"))
            .unwrap();
    let mrun = RunDir::create(&dir.path().join("mrun")).unwrap();
    let mcfg = MaskerTrainConfig {
        epochs: 4,
        batch_size: 8,
        step_size: 1e-3,
        clip_norm: None,
        segment_frames: 120,
        val_pairs: 60,
        seed: 2,
    };
    let mout = train_masker(
        MaskerConfig::toy(2),
        &mcfg,
        &dev_aug,
        &train_m,
        &vout.selected_checkpoint,
        &stft,
        &mrun,
    )
    .unwrap();
    let mut masker = Masker::load(&mout.selected_checkpoint).unwrap();

    let masked_noisy = eer_under(
        &mut verifier,
        &mut Enhancer::Masker(&mut masker),
        &trials,
        &noisy0,
        &stft,
    );
    assert!(
        masked_noisy <= 0.8 * noisy_eer,
        "mask network recovered too little: noisy {} masked {}",
        noisy_eer,
        masked_noisy
    );
    let masked_clean = eer_under(
        &mut verifier,
        &mut Enhancer::Masker(&mut masker),
        &trials,
        &eval_m,
        &stft,
    );
    assert!(
        masked_clean <= clean_eer + 0.10 * clean_eer.max(0.01),
        "mask network hurt clean speech: {} vs {}",
        masked_clean,
        clean_eer
    );

    // The autoencoder baseline trains: dev L2 improves over its first epoch.
    let pair_paths: Vec<_> = dev_aug
        .entries
        .iter()
        .zip(train_m.entries.iter())
        .map(|(a, c)| (a.path.clone(), c.path.clone()))
        .collect();
    let feats = load_pairs(&pair_paths, &stft).unwrap();
    let (train_feats, dev_feats) = feats.split_at(feats.len() - 8);
    let drun = RunDir::create(&dir.path().join("drun")).unwrap();
    let dcfg = DaeTrainConfig {
        phase1_epochs: 3,
        phase2_epochs: 2,
        seed: 3,
        ..DaeTrainConfig::default()
    };
    let dout = train_dae(
        DaeConfig::toy(3),
        &dcfg,
        &train_feats.to_vec(),
        &dev_feats.to_vec(),
        &drun,
    )
    .unwrap();
    let first = drun.read_metrics().unwrap()[0].criterion_value;
    let best = dout.history[dout.best_epoch].criterion_value;
    assert!(best < first, "autoencoder dev L2 did not improve: {} -> {}", first, best);

    pass(&format!(
        "criterion 7: end-to-end benchmark (clean EER {:.3}, 0 dB EER {:.3}, masked {:.3}, masked clean {:.3}, dae {:.4}->{:.4})",
        clean_eer, noisy_eer, masked_noisy, masked_clean, first, best
    ));
}

// ---------------------------------------------------------------- criterion 8

/// Every mask value lies in [0, 1], is finite, and the enhanced spectrogram
/// is exactly the pointwise product of mask and input.
#[test]
fn masks_are_valid_on_a_thousand_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut masker = Masker::build(MaskerConfig::toy(8)).unwrap();
    let n_bins = masker.cfg.n_bins;
    for i in 0..1000 {
        let frames = rng.gen_range(3..20);
        let vals: Vec<f64> = (0..n_bins * frames)
            .map(|_| rng.gen_range(0.0..2.0f64).powi(3))
            .collect();
        let input = Spectrogram {
            values: Matrix::from_vec(n_bins, frames, vals).unwrap(),
            compression_exponent: FEATURE_COMPRESSION,
        };
        let (mask, enhanced) = masker.apply_mask(&input).unwrap();
        assert_eq!(mask.rows, n_bins);
        assert_eq!(mask.cols, frames);
        for (j, &m) in mask.data.iter().enumerate() {
            assert!(m.is_finite() && (0.0..=1.0).contains(&m), "input {} mask[{}] = {}", i, j, m);
        }
        for ((e, m), x) in enhanced
            .values
            .data
            .iter()
            .zip(mask.data.iter())
            .zip(input.values.data.iter())
        {
            assert_eq!(*e, m * x);
        }
    }
    pass("criterion 8: masks on 1000 random inputs are finite, within [0, 1], and multiply the input exactly");
}

// ---------------------------------------------------------------- criterion 9

/// Checkpoints restore bit-exactly for all three model kinds, and identical
/// seeds give identical parameters.
#[test]
fn checkpoints_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();

    let params_bits = |params: Vec<&mut maskid_core::nn::Param>| -> Vec<Vec<u64>> {
        params
            .iter()
            .map(|p| p.value.data.iter().map(|x| x.to_bits()).collect())
            .collect()
    };

    // Same seed, same parameters.
    let mut a = Verifier::build(VerifierConfig::toy(3, 42)).unwrap();
    let mut b = Verifier::build(VerifierConfig::toy(3, 42)).unwrap();
    assert_eq!(params_bits(a.params_mut()), params_bits(b.params_mut()));

    // Round trips preserve bits and re-saved files hash identically.
    let vpath = dir.path().join("v.ckpt");
    a.save(&vpath).unwrap();
    let mut a2 = Verifier::load(&vpath).unwrap();
    assert_eq!(params_bits(a.params_mut()), params_bits(a2.params_mut()));
    let vpath2 = dir.path().join("v2.ckpt");
    a2.save(&vpath2).unwrap();
    assert_eq!(
        checkpoint::sha256_hex(&vpath).unwrap(),
        checkpoint::sha256_hex(&vpath2).unwrap()
    );

    let mpath = dir.path().join("m.ckpt");
    let mut m = Masker::build(MaskerConfig::toy(9)).unwrap();
    m.save(&mpath).unwrap();
    let mut m2 = Masker::load(&mpath).unwrap();
    assert_eq!(
        params_bits(m.params_mut()),
        params_bits(m2.params_mut())
    );

    let dpath = dir.path().join("d.ckpt");
    let mut d = Dae::build(DaeConfig::toy(10)).unwrap();
    d.save(&dpath).unwrap();
    let mut d2 = Dae::load(&dpath).unwrap();
    assert_eq!(
        params_bits(d.params_mut()),
        params_bits(d2.params_mut())
    );

    // Wrong-kind loads are rejected rather than misinterpreted.
    assert!(Verifier::load(&mpath).is_err());
    assert!(Masker::load(&dpath).is_err());
    pass("criterion 9: checkpoints round-trip bit-exactly and seeding is deterministic for all three models");
}

// --------------------------------------------------------------- criterion 10

/// The corruption protocol: dev SNR uniform on (0, 20] in linear power over
/// 10k draws (KS p > 0.01), the test grid covers exactly 17 cells, noise
/// partitions are disjoint, and babble never contains the target speaker.
#[test]
fn augmentation_protocol_is_statistically_correct() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_toy_corpus(
        &SynthConfig {
            n_speakers: 4,
            utts_per_speaker: 3,
            utt_seconds: 1.2,
            seed: 99,
        },
        dir.path(),
    )
    .unwrap();

    // 10k plan-only draws.
    let entries: Vec<data::ManifestEntry> = (0..10_000)
        .map(|i| data::ManifestEntry {
            utterance_id: format!("u{}", i),
            speaker_id: format!("dev_spk{:03}", i % 4),
            path: "/dev/null".into(),
            duration_secs: 1.0,
        })
        .collect();
    let big = data::Manifest {
        split: Split::Dev,
        entries: entries.clone(),
    };
    let plans = plan_dev_augmented(&big, &corpus.dev_pool, 13).unwrap();
    assert_eq!(plans.len(), 10_000);

    let snrs: Vec<f64> = plans
        .iter()
        .filter_map(|p| p.spec.snr.map(|s| s.linear()))
        .collect();
    assert!(snrs.iter().all(|&s| s > 0.0 && s <= DEV_SNR_LINEAR_MAX));
    let p = stats::ks_uniform_p(&snrs, 0.0, DEV_SNR_LINEAR_MAX).unwrap();
    assert!(p > 0.01, "KS p-value {}", p);

    // Babble exclusion.
    let by_id: BTreeMap<&str, &data::NoiseSource> = corpus
        .dev_pool
        .sources
        .iter()
        .map(|s| (s.id.as_str(), s))
        .collect();
    for (entry, plan) in entries.iter().zip(plans.iter()) {
        if plan.spec.category == NoiseCategory::Babble {
            let src = by_id[plan.spec.noise_source_id.as_str()];
            assert!(!src.speakers.contains(&entry.speaker_id));
        }
    }

    // Grid coverage: 3 additive categories x 5 SNRs + 2 reverb classes.
    let cells = build_test_conditions(
        &corpus.test,
        &corpus.test_pool,
        Some(&corpus.dev_pool),
        17,
        &dir.path().join("cells"),
    )
    .unwrap();
    assert_eq!(cells.len(), 17);
    let mut labels: Vec<String> = cells
        .iter()
        .map(|(c, _)| format!("{}/{}", c.category.as_str(), c.label))
        .collect();
    labels.sort();
    labels.dedup();
    assert_eq!(labels.len(), 17);
    for (c, m) in &cells {
        assert_eq!(m.entries.len(), corpus.test.entries.len());
        for e in &m.entries {
            assert!(e.path.is_file());
        }
        if c.category == NoiseCategory::Reverb {
            assert!(c.snr_db.is_none());
        } else {
            assert!([0.0, 5.0, 10.0, 15.0, 20.0].contains(&c.snr_db.unwrap()));
        }
    }

    // Partition disjointness is enforced.
    assert!(corpus.dev_pool.assert_disjoint(&corpus.test_pool).is_ok());
    let mut overlapping = NoisePool {
        partition: corpus.test_pool.partition,
        sources: corpus.test_pool.sources.clone(),
    };
    overlapping.sources[0].id = corpus.dev_pool.sources[0].id.clone();
    assert!(corpus.dev_pool.assert_disjoint(&overlapping).is_err());

    pass("criterion 10: dev SNR is uniform on (0, 20] (KS p > 0.01 over 10k draws), 17-cell grid, disjoint pools, babble exclusion");
}
