//! Deterministic desk-scale corpus: harmonic-stack "speakers", a partitioned
//! noise pool, and dev/test manifests with disjoint speaker sets.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{Manifest, ManifestEntry, NoiseCategory, NoisePool, NoiseSource, Split};
use crate::dsp::{self, Waveform};
use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
const N_HARMONICS: usize = 12;

/// A fixed per-speaker voice: fundamental, harmonic amplitude envelope, and
/// jitter ranges. Deterministic given the corpus seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpeakerProfile {
    pub speaker_id: String,
    pub f0: f64,
    pub harmonic_env: Vec<f64>,
    pub f0_drift: f64,
    pub amp_jitter: f64,
}

impl ToySpeakerProfile {
    fn generate(speaker_id: String, rng: &mut ChaCha12Rng) -> Self {
        // Wide f0 spread plus distinct envelopes keep speakers separable.
        let f0 = rng.gen_range(90.0..310.0);
        let mut harmonic_env: Vec<f64> = (0..N_HARMONICS)
            .map(|k| rng.gen_range(0.05..1.0) / (1.0 + k as f64 * 0.3))
            .collect();
        let norm: f64 = harmonic_env.iter().map(|a| a * a).sum::<f64>().sqrt();
        for a in &mut harmonic_env {
            *a /= norm;
        }
        Self {
            speaker_id,
            f0,
            harmonic_env,
            f0_drift: rng.gen_range(0.01..0.04),
            amp_jitter: rng.gen_range(0.05..0.2),
        }
    }

    /// One utterance: harmonic stack with slow vibrato, amplitude jitter,
    /// and a few silence gaps.
    pub fn synth_utterance(&self, seconds: f64, rng: &mut ChaCha12Rng) -> Waveform {
        let n = (seconds * SAMPLE_RATE as f64) as usize;
        let drift_hz = self.f0 * self.f0_drift * rng.gen_range(-1.0..1.0);
        let vibrato_rate = rng.gen_range(2.0..6.0);
        let vibrato_depth = self.f0 * rng.gen_range(0.002..0.01);
        let am_rate = rng.gen_range(1.0..4.0);
        let am_phase = rng.gen_range(0.0..2.0 * PI);

        let mut samples = vec![0.0f64; n];
        let dt = 1.0 / SAMPLE_RATE as f64;
        let mut phase = vec![0.0f64; N_HARMONICS];
        for (i, s) in samples.iter_mut().enumerate() {
            let t = i as f64 * dt;
            let f0 = self.f0 + drift_hz + vibrato_depth * (2.0 * PI * vibrato_rate * t).sin();
            let am = 1.0 + self.amp_jitter * (2.0 * PI * am_rate * t + am_phase).sin();
            let mut v = 0.0;
            for (k, (p, a)) in phase.iter_mut().zip(self.harmonic_env.iter()).enumerate() {
                let f = f0 * (k + 1) as f64;
                if f < SAMPLE_RATE as f64 / 2.0 {
                    *p += 2.0 * PI * f * dt;
                    v += a * p.sin();
                }
            }
            *s = v * am;
        }

        // Silence gaps: 2-3 zeroed regions of 80-200 ms.
        let n_gaps = rng.gen_range(2..4usize);
        for _ in 0..n_gaps {
            let len = rng.gen_range((SAMPLE_RATE as usize * 80) / 1000..(SAMPLE_RATE as usize * 200) / 1000);
            if len >= n {
                continue;
            }
            let start = rng.gen_range(0..n - len);
            for s in &mut samples[start..start + len] {
                *s = 0.0;
            }
        }

        let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs())).max(1e-12);
        for s in &mut samples {
            *s *= 0.5 / peak;
        }
        Waveform::new(samples, SAMPLE_RATE).expect("synth produces finite nonempty audio")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub utt_seconds: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_speakers: 20,
            utts_per_speaker: 20,
            utt_seconds: 3.0,
            seed: 0,
        }
    }
}

/// Everything `synth_toy_corpus` writes: manifests for both splits and the
/// two disjoint noise-pool partitions.
#[derive(Debug)]
pub struct ToyCorpus {
    pub dev: Manifest,
    pub test: Manifest,
    pub dev_pool: NoisePool,
    pub test_pool: NoisePool,
    pub profiles: Vec<ToySpeakerProfile>,
}

fn write_utt(dir: &Path, id: &str, w: &Waveform) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{}.wav", id));
    dsp::write_wav(&path, w)?;
    Ok(path)
}

fn white(n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
}

fn pink(n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    // Leaky integrator over white noise tilts the spectrum toward 1/f.
    let mut out = Vec::with_capacity(n);
    let mut state = 0.0;
    for _ in 0..n {
        state = 0.98 * state + rng.gen_range(-0.5..0.5);
        out.push(state * 0.2);
    }
    out
}

fn chirp(n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    // Repeating linear sweeps stand in for "music".
    let f_lo = rng.gen_range(200.0..600.0);
    let f_hi = rng.gen_range(1500.0..4000.0);
    let sweep_secs = rng.gen_range(0.3..1.0);
    let sweep_len = (sweep_secs * SAMPLE_RATE as f64) as usize;
    let dt = 1.0 / SAMPLE_RATE as f64;
    let mut out = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    for i in 0..n {
        let frac = (i % sweep_len) as f64 / sweep_len as f64;
        let f = f_lo + (f_hi - f_lo) * frac;
        phase += 2.0 * PI * f * dt;
        out.push(0.4 * phase.sin());
    }
    out
}

fn exp_decay_rir(t60: f64, rng: &mut ChaCha12Rng) -> Waveform {
    // Noise shaped by an exponential envelope, unit direct-path peak.
    let len = (t60 * 1.5 * SAMPLE_RATE as f64) as usize;
    let tau = t60 / 6.9078; // ln(10^3): -60 dB at t60
    let dt = 1.0 / SAMPLE_RATE as f64;
    let mut samples = vec![0.0f64; len];
    samples[0] = 1.0;
    for (i, s) in samples.iter_mut().enumerate().skip(1) {
        let env = (-(i as f64) * dt / tau).exp();
        *s = 0.3 * env * rng.gen_range(-1.0..1.0);
    }
    Waveform::new(samples, SAMPLE_RATE).expect("rir is finite and nonempty")
}

fn synth_split(
    split: Split,
    speakers: &[ToySpeakerProfile],
    cfg: &SynthConfig,
    root: &Path,
    rng: &mut ChaCha12Rng,
) -> Result<Manifest> {
    let dir = root.join(split.as_str()).join("clean");
    let mut entries = Vec::new();
    for profile in speakers {
        for u in 0..cfg.utts_per_speaker {
            let id = format!("{}_u{:03}", profile.speaker_id, u);
            let wave = profile.synth_utterance(cfg.utt_seconds, rng);
            let path = write_utt(&dir, &id, &wave)?;
            entries.push(ManifestEntry {
                utterance_id: id,
                speaker_id: profile.speaker_id.clone(),
                path,
                duration_secs: wave.duration_secs(),
            });
        }
    }
    Manifest::new(split, entries)
}

fn synth_pool(
    partition: Split,
    speakers: &[ToySpeakerProfile],
    cfg: &SynthConfig,
    root: &Path,
    rng: &mut ChaCha12Rng,
) -> Result<NoisePool> {
    let n = (cfg.utt_seconds.max(3.0) * 2.0 * SAMPLE_RATE as f64) as usize;
    let base = root.join("pool").join(partition.as_str());
    let tag = partition.as_str();
    let mut sources = Vec::new();

    for i in 0..4usize {
        let kind = if i % 2 == 0 { "white" } else { "pink" };
        let samples = if i % 2 == 0 { white(n, rng) } else { pink(n, rng) };
        let id = format!("{}_noise_{}_{}", tag, kind, i);
        let w = Waveform::new(samples, SAMPLE_RATE).expect("noise is finite");
        let path = write_utt(&base.join("noise"), &id, &w)?;
        sources.push(NoiseSource {
            id,
            category: NoiseCategory::Noise,
            path,
            speakers: Vec::new(),
        });
    }

    for i in 0..4usize {
        let id = format!("{}_music_{}", tag, i);
        let w = Waveform::new(chirp(n, rng), SAMPLE_RATE).expect("chirp is finite");
        let path = write_utt(&base.join("music"), &id, &w)?;
        sources.push(NoiseSource {
            id,
            category: NoiseCategory::Music,
            path,
            speakers: Vec::new(),
        });
    }

    // Babble: sums of 3 voices each, recorded by id so augmentation can
    // exclude any source containing the target speaker. Mixing one corpus
    // voice with dedicated background voices keeps the exclusion meaningful
    // while guaranteeing every speaker still has usable babble, even in
    // corpora with only two or three speakers.
    let n_babble = speakers.len().min(6).max(2);
    for i in 0..n_babble {
        let corpus_voice = &speakers[i % speakers.len()];
        let mut voices: Vec<ToySpeakerProfile> = vec![corpus_voice.clone()];
        for j in 0..2 {
            voices.push(ToySpeakerProfile::generate(
                format!("{}_bg{}_{}", tag, i, j),
                rng,
            ));
        }
        let mut samples = vec![0.0f64; n];
        let mut who = Vec::new();
        for voice in &voices {
            let utt = voice.synth_utterance(n as f64 / SAMPLE_RATE as f64, rng);
            for (acc, s) in samples.iter_mut().zip(utt.samples.iter()) {
                *acc += s / 3.0;
            }
            who.push(voice.speaker_id.clone());
        }
        who.sort();
        let id = format!("{}_babble_{}", tag, i);
        let w = Waveform::new(samples, SAMPLE_RATE).expect("babble is finite");
        let path = write_utt(&base.join("babble"), &id, &w)?;
        sources.push(NoiseSource {
            id,
            category: NoiseCategory::Babble,
            path,
            speakers: who,
        });
    }

    // Reverb: small-room and large-room RIR classes.
    for (class, t60s) in [("small", [0.08, 0.12]), ("large", [0.3, 0.45])] {
        for (i, &t60) in t60s.iter().enumerate() {
            let id = format!("{}_reverb_{}_{}", tag, class, i);
            let w = exp_decay_rir(t60, rng);
            let path = write_utt(&base.join("reverb"), &id, &w)?;
            sources.push(NoiseSource {
                id,
                category: NoiseCategory::Reverb,
                path,
                speakers: Vec::new(),
            });
        }
    }

    Ok(NoisePool { partition, sources })
}

/// Generate the full toy corpus under `root`: clean dev/test audio with
/// disjoint speakers, both noise-pool partitions, and all manifest files.
pub fn synth_toy_corpus(cfg: &SynthConfig, root: &Path) -> Result<ToyCorpus> {
    if cfg.n_speakers < 2 {
        return Err(Error::InvalidArgument(
            "toy corpus needs at least 2 speakers".into(),
        ));
    }
    if cfg.utts_per_speaker < 2 {
        return Err(Error::InvalidArgument(
            "toy corpus needs at least 2 utterances per speaker".into(),
        ));
    }
    if cfg.utt_seconds <= 0.5 {
        return Err(Error::InvalidArgument(
            "utterances must be longer than 0.5 s".into(),
        ));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let n_test_speakers = (cfg.n_speakers / 4).max(2);
    let dev_profiles: Vec<ToySpeakerProfile> = (0..cfg.n_speakers)
        .map(|i| ToySpeakerProfile::generate(format!("dev_spk{:03}", i), &mut rng))
        .collect();
    let test_profiles: Vec<ToySpeakerProfile> = (0..n_test_speakers)
        .map(|i| ToySpeakerProfile::generate(format!("test_spk{:03}", i), &mut rng))
        .collect();

    let dev = synth_split(Split::Dev, &dev_profiles, cfg, root, &mut rng)?;
    let test = synth_split(Split::Test, &test_profiles, cfg, root, &mut rng)?;
    let dev_pool = synth_pool(Split::Dev, &dev_profiles, cfg, root, &mut rng)?;
    let test_pool = synth_pool(Split::Test, &test_profiles, cfg, root, &mut rng)?;
    dev_pool.assert_disjoint(&test_pool)?;

    dev.save(&root.join("dev_manifest.jsonl"))?;
    test.save(&root.join("test_manifest.jsonl"))?;
    dev_pool.save(&root.join("dev_pool.jsonl"))?;
    test_pool.save(&root.join("test_pool.jsonl"))?;

    let mut profiles = dev_profiles;
    profiles.extend(test_profiles);
    Ok(ToyCorpus {
        dev,
        test,
        dev_pool,
        test_pool,
        profiles,
    })
}
