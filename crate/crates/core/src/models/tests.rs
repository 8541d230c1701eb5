use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checks::MaskedVerifierUnderCe;
use super::*;
use crate::dsp::{self, Matrix, StftConfig, Waveform};
use crate::nn::gradcheck::{max_fd_rel_err_eps, GradCheckable};
use crate::nn::Tensor;

fn random_compressed(bins: usize, frames: usize, seed: u64) -> Spectrogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..bins * frames).map(|_| rng.gen_range(0.0..1.5)).collect();
    Spectrogram {
        values: Matrix::from_vec(bins, frames, data).unwrap(),
        compression_exponent: FEATURE_COMPRESSION,
    }
}

#[test]
fn verifier_embedding_is_600_dim_at_full_size() {
    let mut v = Verifier::build(VerifierConfig::full(10, 1)).unwrap();
    for frames in [20usize, 37] {
        let s = random_compressed(257, frames, frames as u64);
        let e = v.embed(&s).unwrap();
        assert_eq!(e.len(), 600);
    }
}

#[test]
fn verifier_head_width_matches_speaker_count() {
    let v = Verifier::build(VerifierConfig::full(1211, 1)).unwrap();
    let head_w = &v.head.params()[0].value;
    assert_eq!(head_w.shape, vec![1211, 600]);
}

#[test]
fn verifier_accepts_298_frame_training_segment() {
    let mut v = Verifier::build(VerifierConfig::toy(5, 2)).unwrap();
    let s = random_compressed(257, 298, 3);
    let logits = v.logits(&super::matrix_to_tensor(&s.values)).unwrap();
    assert_eq!(logits.shape, vec![5]);
}

#[test]
fn verifier_param_count_matches_closed_form() {
    let cfg = VerifierConfig::full(10, 1);
    let v = Verifier::build(cfg.clone()).unwrap();
    let [f1, f2, f3, f4] = cfg.conv_filters;
    let expect = (cfg.n_bins * 5 * f1 + f1)
        + (f1 * 7 * f2 + f2)
        + (f2 * f3 + f3)
        + (f3 * f4 + f4)
        + (f4 * cfg.fc1_dim + cfg.fc1_dim)
        + (cfg.fc1_dim * cfg.embedding_dim + cfg.embedding_dim)
        + (cfg.embedding_dim * cfg.n_speakers + cfg.n_speakers);
    assert_eq!(v.param_count(), expect);
    assert_eq!(v.param_count(), 13_947_610);
}

#[test]
fn verifier_rejects_short_and_uncompressed_input() {
    let mut v = Verifier::build(VerifierConfig::toy(3, 2)).unwrap();
    let short = random_compressed(257, 10, 4);
    assert!(v.embed(&short).is_err());
    let mut raw = random_compressed(257, 40, 5);
    raw.compression_exponent = 1.0;
    assert!(v.embed(&raw).is_err());
}

#[test]
fn embedding_is_deterministic_and_scale_sensitive() {
    let mut v = Verifier::build(VerifierConfig::toy(4, 9)).unwrap();
    let s = random_compressed(257, 40, 6);
    let a = v.embed(&s).unwrap();
    let b = v.embed(&s).unwrap();
    assert_eq!(a, b);

    let mut doubled = s.clone();
    for x in &mut doubled.values.data {
        *x *= 2.0;
    }
    let c = v.embed(&doubled).unwrap();
    assert!(a.iter().zip(c.iter()).any(|(x, y)| (x - y).abs() > 1e-9));
}

#[test]
fn masker_context_matches_published_table() {
    // Context-column (5x1) reading.
    let cfg = MaskerConfig::full(0);
    assert_eq!(cfg.receptive_field(), (127, 71));
    // Literal 5x5 reading of conv4..conv6.
    let mut literal = cfg.clone();
    literal.literal_5x5 = true;
    assert_eq!(literal.receptive_field(), (127, 83));
}

#[test]
fn masker_per_layer_contexts() {
    // Cumulative contexts after each conv of the default reading.
    let cfg = MaskerConfig::full(0);
    let specs = cfg.specs();
    let expected = [
        (1, 7),
        (7, 7),
        (11, 11),
        (19, 11),
        (35, 11),
        (67, 11),
        (71, 15),
        (79, 23),
        (95, 39),
        (127, 71),
        (127, 71),
    ];
    for (i, want) in expected.iter().enumerate() {
        let prefix = &specs[..(i + 1) * 2];
        assert_eq!(crate::nn::receptive_field(prefix), *want, "conv{}", i + 1);
    }
}

#[test]
fn fresh_masker_with_zeroed_head_emits_half_mask() {
    let mut m = Masker::build(MaskerConfig::toy(3)).unwrap();
    // Zero the final conv's weights and bias: sigmoid(0) = 0.5.
    let n = m.graph.layers.len();
    for p in &mut m.graph.layers[n - 2].params {
        p.value.fill(0.0);
    }
    let s = random_compressed(257, 24, 8);
    let (mask, masked) = m.apply_mask(&s).unwrap();
    assert!(mask.data.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    for (ms, orig) in masked.values.data.iter().zip(s.values.data.iter()) {
        assert!((ms - orig * 0.5).abs() < 1e-15);
    }
}

#[test]
fn mask_is_bounded_and_contractive() {
    let mut m = Masker::build(MaskerConfig::toy(5)).unwrap();
    for seed in 0..20 {
        let s = random_compressed(257, 16, 100 + seed);
        let (mask, masked) = m.apply_mask(&s).unwrap();
        assert_eq!(mask.rows, 257);
        assert_eq!(mask.cols, 16);
        assert!(mask.data.iter().all(|&v| v > 0.0 && v < 1.0));
        for (ms, orig) in masked.values.data.iter().zip(s.values.data.iter()) {
            assert!(*ms <= *orig);
        }
    }
}

#[test]
fn masker_preserves_shape_across_lengths() {
    let mut m = Masker::build(MaskerConfig::toy(6)).unwrap();
    for frames in [8usize, 33, 298] {
        let s = random_compressed(257, frames, frames as u64);
        let (mask, masked) = m.apply_mask(&s).unwrap();
        assert_eq!((mask.rows, mask.cols), (257, frames));
        assert_eq!((masked.values.rows, masked.values.cols), (257, frames));
    }
}

#[test]
fn dae_preserves_shape_and_stays_finite() {
    let mut d = Dae::build(DaeConfig::toy(4)).unwrap();
    assert_eq!(d.cfg.context_frames(), 25);
    for frames in [298usize, 40, 10] {
        let s = random_compressed(257, frames, frames as u64 + 50);
        let out = d.enhance(&s).unwrap();
        assert_eq!((out.values.rows, out.values.cols), (257, frames));
        assert!(out.values.data.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}

#[test]
fn enhance_to_waveform_identity_mask_equals_round_trip() {
    let cfg = StftConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let w = Waveform::new(
        (0..16000).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        16000,
    )
    .unwrap();
    let spec = dsp::stft(&w, &cfg).unwrap();
    let raw = Spectrogram {
        values: spec.magnitude.clone(),
        compression_exponent: 1.0,
    };
    let compressed = dsp::compress(&raw, FEATURE_COMPRESSION).unwrap();

    let direct = dsp::istft_with_phase(&spec.magnitude, &spec.phase, &cfg, 16000).unwrap();
    let via_enhance = enhance_to_waveform(&compressed, &spec, &cfg).unwrap();
    for (a, b) in direct.samples.iter().zip(via_enhance.samples.iter()) {
        assert!((a - b).abs() < 1e-6);
    }

    // All-zero enhanced magnitude -> essentially silence.
    let zeros = Spectrogram {
        values: Matrix::zeros(257, spec.magnitude.cols),
        compression_exponent: FEATURE_COMPRESSION,
    };
    let silent = enhance_to_waveform(&zeros, &spec, &cfg).unwrap();
    assert!(silent.power() < 1e-12);
}

#[test]
fn model_checkpoints_reload_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("masker.ckpt");
    let mut m = Masker::build(MaskerConfig::toy(11)).unwrap();
    m.save(&path).unwrap();
    let mut loaded = Masker::load(&path).unwrap();
    assert_eq!(loaded.cfg, m.cfg);

    let s = random_compressed(257, 12, 1);
    let (a, _) = m.apply_mask(&s).unwrap();
    let (b, _) = loaded.apply_mask(&s).unwrap();
    assert_eq!(a.data, b.data);

    // Wrong-kind load is rejected.
    assert!(Verifier::load(&path).is_err());
}

#[test]
fn composite_gradients_match_finite_differences() {
    // Tiny networks, full wiring: masker -> pointwise product -> verifier.
    // A composite net has so many ReLU units that some pre-activation is
    // always near its kink; instead of demanding a fixed clearance, take the
    // clearest input of many draws and scale the difference step to it.
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
        let mut best: Option<(f64, MaskedVerifierUnderCe)> = None;
        for _ in 0..200 {
            let masker = Masker::build(MaskerConfig {
                filters: 2,
                n_bins: 9,
                literal_5x5: false,
                seed,
            })
            .unwrap();
            let verifier = Verifier::build(VerifierConfig {
                n_speakers: 3,
                n_bins: 9,
                conv_filters: [4, 4, 4, 5],
                fc1_dim: 5,
                embedding_dim: 4,
                seed: seed + 1,
            })
            .unwrap();
            let input = Tensor::from_vec(
                &[9, 14],
                (0..9 * 14).map(|_| rng.gen_range(0.3..1.3)).collect(),
            )
            .unwrap();
            let mut candidate = MaskedVerifierUnderCe {
                masker,
                verifier,
                input,
                label: 1,
            };
            let dist = candidate.kink_distance().unwrap();
            if best.as_ref().map_or(true, |(d, _)| dist > *d) {
                best = Some((dist, candidate));
            }
        }
        let (dist, mut check) = best.unwrap();
        // Step small enough that no perturbation can cross the nearest kink,
        // but large enough that rounding noise stays well under tolerance.
        let fd_eps = (dist / 50.0).clamp(1e-7, 1e-5);
        assert!(
            50.0 * fd_eps <= dist.max(5e-6),
            "seed {}: clearance {} too small for any usable step",
            seed,
            dist
        );
        let err = max_fd_rel_err_eps(&mut check, 30, fd_eps, &mut rng).unwrap();
        assert!(err < 1e-4, "seed {}: max rel err {} (eps {})", seed, err, fd_eps);
    }
}
