use std::collections::HashMap;
use std::path::PathBuf;

use super::{cosine, ScoreSet, ScoredTrial, Trial};
use crate::dsp::{self, Spectrogram, StftConfig};
use crate::error::{Error, Result};
use crate::models::{Dae, Masker, Verifier, FEATURE_COMPRESSION};

/// Enhancement stage applied between feature extraction and embedding.
pub enum Enhancer<'a> {
    None,
    Masker(&'a mut Masker),
    Dae(&'a mut Dae),
}

impl Enhancer<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            Enhancer::None => "none",
            Enhancer::Masker(_) => "masker",
            Enhancer::Dae(_) => "dae",
        }
    }

    fn apply(&mut self, s: &Spectrogram) -> Result<Spectrogram> {
        match self {
            Enhancer::None => Ok(s.clone()),
            Enhancer::Masker(m) => Ok(m.apply_mask(s)?.1),
            Enhancer::Dae(d) => d.enhance(s),
        }
    }
}

/// Per-utterance embedding cache: each utterance is embedded once per
/// (audio file, enhancer) and reused across trials.
#[derive(Default)]
pub struct EmbeddingCache {
    map: HashMap<String, Vec<f64>>,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Compressed-spectrogram features for one audio file.
pub fn utterance_features(path: &std::path::Path, cfg: &StftConfig) -> Result<Spectrogram> {
    let wave = dsp::read_wav(path)?;
    let spec = dsp::stft(&wave, cfg)?;
    let raw = Spectrogram {
        values: spec.magnitude,
        compression_exponent: 1.0,
    };
    dsp::compress(&raw, FEATURE_COMPRESSION)
}

/// Score every trial: STFT -> compress -> (enhance) -> embed -> cosine.
/// `audio` maps utterance id to its wav under the condition being scored.
pub fn score_trials(
    verifier: &mut Verifier,
    enhancer: &mut Enhancer,
    trials: &[Trial],
    audio: &HashMap<String, PathBuf>,
    cfg: &StftConfig,
    cache: &mut EmbeddingCache,
) -> Result<ScoreSet> {
    let mut missing: Vec<String> = Vec::new();
    for t in trials {
        for utt in [&t.utt_a, &t.utt_b] {
            if !audio.contains_key(utt.as_str()) && !cache.map.contains_key(utt.as_str()) {
                missing.push(utt.clone());
            }
        }
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::Data(format!(
            "missing audio for utterances: {}",
            missing.join(", ")
        )));
    }

    let mut scored = Vec::with_capacity(trials.len());
    for t in trials {
        for utt in [&t.utt_a, &t.utt_b] {
            if cache.map.contains_key(utt.as_str()) {
                continue;
            }
            let feats = utterance_features(&audio[utt.as_str()], cfg)?;
            let enhanced = enhancer.apply(&feats)?;
            let emb = verifier.embed(&enhanced)?;
            cache.map.insert(utt.clone(), emb);
        }
        let score = cosine(&cache.map[t.utt_a.as_str()], &cache.map[t.utt_b.as_str()])?;
        scored.push(ScoredTrial {
            utt_a: t.utt_a.clone(),
            utt_b: t.utt_b.clone(),
            score,
            target: t.target,
        });
    }
    ScoreSet::new(scored)
}
