//! The three training loops (verifier pre-training, mask training against a
//! frozen verifier, and the two-phase denoising autoencoder), plus run
//! directories, flat key-value configs, and checkpoint selection.

use std::collections::{BTreeMap, HashMap};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Manifest;
use crate::dsp::{Spectrogram, StftConfig};
use crate::error::{Error, Result};
use crate::eval::{self, Trial};
use crate::models::Verifier;

mod dae;
mod masker;
mod verifier;

pub use dae::{load_pairs, train_dae, DaeTrainConfig, FeaturePair};
pub use masker::{train_masker, MaskerTrainConfig};
pub use verifier::{train_verifier, TrainOutcome, VerifierTrainConfig};

/// Which dataset a Table-2-style experiment trains on: the clean set, the
/// corrupted copy, or their union.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSelector {
    Clean,
    Augmented,
    Both,
}

impl DatasetSelector {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(DatasetSelector::Clean),
            "augmented" => Ok(DatasetSelector::Augmented),
            "both" => Ok(DatasetSelector::Both),
            other => Err(Error::InvalidArgument(format!(
                "dataset selector must be clean|augmented|both, got {:?}",
                other
            ))),
        }
    }

    /// Merge the clean and augmented manifests per the selector.
    pub fn select(&self, clean: &Manifest, augmented: Option<&Manifest>) -> Result<Manifest> {
        let augmented = || {
            augmented.ok_or_else(|| {
                Error::InvalidArgument("selector needs an augmented manifest".into())
            })
        };
        let entries = match self {
            DatasetSelector::Clean => clean.entries.clone(),
            DatasetSelector::Augmented => augmented()?.entries.clone(),
            DatasetSelector::Both => {
                let mut e = clean.entries.clone();
                e.extend(augmented()?.entries.clone());
                e
            }
        };
        Manifest::new(clean.split, entries)
    }
}

/// One epoch's log line in `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: u32,
    pub epoch: usize,
    pub step_size: f64,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_accuracy: Option<f64>,
    pub criterion: String,
    pub criterion_value: f64,
    pub checkpoint: String,
}

/// A training run's output directory: resolved config, per-epoch metrics,
/// checkpoints, and the final selection marker.
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root.join("checkpoints")).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn write_config(&self, kv: &BTreeMap<String, String>) -> Result<()> {
        let path = self.root.join("config.txt");
        std::fs::write(&path, format_kv(kv)).map_err(|e| Error::io(&path, e))
    }

    pub fn append_metrics(&self, record: &EpochRecord) -> Result<()> {
        let path = self.root.join("metrics.jsonl");
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let line = serde_json::to_string(record).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(f, "{}", line).map_err(|e| Error::io(&path, e))
    }

    pub fn read_metrics(&self) -> Result<Vec<EpochRecord>> {
        let path = self.root.join("metrics.jsonl");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Data(e.to_string())))
            .collect()
    }

    pub fn checkpoint_path(&self, phase: u32, epoch: usize) -> PathBuf {
        self.root
            .join("checkpoints")
            .join(format!("phase{}_epoch{:03}.ckpt", phase, epoch))
    }

    /// Record the retained checkpoint and its criterion value.
    pub fn write_selection(&self, checkpoint: &Path, criterion: &str, value: f64) -> Result<()> {
        let path = self.root.join("selection.txt");
        let text = format!(
            "checkpoint = {}\ncriterion = {}\nvalue = {:.17}\n",
            checkpoint.display(),
            criterion,
            value
        );
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn selected_checkpoint(&self) -> Result<PathBuf> {
        let path = self.root.join("selection.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let kv = parse_kv(&text)?;
        kv.get("checkpoint")
            .map(PathBuf::from)
            .ok_or_else(|| Error::Data("selection.txt has no checkpoint entry".into()))
    }
}

/// Flat `key = value` config text; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`, got {:?}", i + 1, raw))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub fn format_kv(kv: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in kv {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Index of the minimal criterion value; ties resolve to the earliest epoch.
pub fn select_best(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, bv)) if v >= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Compressed features and integer speaker labels for a manifest, loaded
/// once and reused across epochs. Label indices follow the sorted speaker
/// list.
pub struct FeatureStore {
    pub speakers: Vec<String>,
    /// (utterance_id, label, features), manifest order.
    pub items: Vec<(String, usize, Spectrogram)>,
}

impl FeatureStore {
    pub fn load(manifest: &Manifest, stft: &StftConfig) -> Result<Self> {
        let speakers = manifest.speakers();
        let label_of: HashMap<&str, usize> = speakers
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let items: Vec<(String, usize, Spectrogram)> = manifest
            .entries
            .par_iter()
            .map(|e| {
                let feats = eval::utterance_features(&e.path, stft)?;
                Ok((
                    e.utterance_id.clone(),
                    label_of[e.speaker_id.as_str()],
                    feats,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { speakers, items })
    }
}

/// Deterministic Fisher-Yates shuffle of 0..n.
pub(crate) fn shuffled_indices<R: rand::Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Per-epoch validation EER used for checkpoint selection.
pub fn evaluate_epoch(
    verifier: &mut Verifier,
    enhancer: &mut eval::Enhancer,
    trials: &[Trial],
    audio: &HashMap<String, PathBuf>,
    stft: &StftConfig,
) -> Result<f64> {
    let mut cache = eval::EmbeddingCache::new();
    let scores = eval::score_trials(verifier, enhancer, trials, audio, stft, &mut cache)?;
    eval::eer(&scores)
}

pub(crate) fn check_finite(loss: f64, context: &str) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "{}: loss diverged to {}",
            context, loss
        )));
    }
    Ok(())
}
