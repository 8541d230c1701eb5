//! Speaker-classifier pre-training: cross entropy over fixed-length
//! segments, Adam, per-epoch checkpoints, best-validation-EER selection.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_finite, evaluate_epoch, select_best, shuffled_indices, EpochRecord, FeatureStore, RunDir,
};
use crate::data::{audio_index, sample_segment, verification_trials, Manifest};
use crate::dsp::StftConfig;
use crate::error::{Error, Result};
use crate::eval::Enhancer;
use crate::models::{matrix_to_tensor, Verifier, VerifierConfig};
use crate::nn::{cross_entropy, softmax, OptimKind, Optimizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub clip_norm: Option<f64>,
    pub segment_frames: usize,
    /// Positive (and negative) pair count for per-epoch validation EER.
    pub val_pairs: usize,
    pub seed: u64,
}

impl Default for VerifierTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            step_size: 1e-3,
            clip_norm: None,
            segment_frames: 298,
            val_pairs: 200,
            seed: 0,
        }
    }
}

impl VerifierTrainConfig {
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut kv = BTreeMap::new();
        kv.insert("epochs".into(), self.epochs.to_string());
        kv.insert("batch_size".into(), self.batch_size.to_string());
        kv.insert("step_size".into(), self.step_size.to_string());
        kv.insert(
            "clip_norm".into(),
            self.clip_norm.map(|c| c.to_string()).unwrap_or_else(|| "none".into()),
        );
        kv.insert("segment_frames".into(), self.segment_frames.to_string());
        kv.insert("val_pairs".into(), self.val_pairs.to_string());
        kv.insert("seed".into(), self.seed.to_string());
        kv
    }
}

pub struct TrainOutcome {
    pub selected_checkpoint: PathBuf,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Train a fresh classifier on `train`; validate per epoch with a trial list
/// drawn from `val` (clean audio); keep the best-EER epoch (ties -> earlier).
pub fn train_verifier(
    mut model_cfg: VerifierConfig,
    cfg: &VerifierTrainConfig,
    train: &Manifest,
    val: &Manifest,
    stft: &StftConfig,
    run: &RunDir,
) -> Result<TrainOutcome> {
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "epochs and batch_size must be positive".into(),
        ));
    }
    let store = FeatureStore::load(train, stft)?;
    if store.speakers.len() < 2 {
        return Err(Error::Data("training needs at least 2 speakers".into()));
    }
    model_cfg.n_speakers = store.speakers.len();
    let mut verifier = Verifier::build(model_cfg)?;
    if cfg.segment_frames < verifier.min_frames() {
        return Err(Error::InvalidArgument(format!(
            "segment_frames {} is below the receptive minimum {}",
            cfg.segment_frames,
            verifier.min_frames()
        )));
    }

    let mut kv = cfg.to_kv();
    kv.insert("model".into(), "verifier".into());
    kv.insert("n_speakers".into(), store.speakers.len().to_string());
    run.write_config(&kv)?;

    let trials = verification_trials(val, cfg.val_pairs, cfg.seed)?;
    let val_audio = audio_index(val);

    let mut opt = Optimizer::new(OptimKind::adam_default(), cfg.step_size, cfg.clip_norm)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut eers = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let order = shuffled_indices(store.items.len(), &mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut pending = 0usize;
        for (step, &i) in order.iter().enumerate() {
            let (_, label, feats) = &store.items[i];
            let seg = sample_segment(feats, cfg.segment_frames, &mut rng)?;
            let logits = verifier.logits(&matrix_to_tensor(&seg.values))?;
            let (loss, mut grad) = cross_entropy(&logits, *label)?;
            check_finite(loss, "verifier training")?;
            loss_sum += loss;
            let probs = softmax(&logits.data);
            let argmax = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(k, _)| k)
                .unwrap_or(0);
            if argmax == *label {
                correct += 1;
            }
            // Average gradients over the batch before stepping.
            let remaining = order.len() - (step - pending);
            let batch_len = cfg.batch_size.min(remaining);
            for g in &mut grad.data {
                *g /= batch_len as f64;
            }
            verifier.backward_from_logits(&grad)?;
            pending += 1;
            if pending == batch_len {
                opt.clip_and_step(&mut verifier.params_mut())?;
                pending = 0;
            }
        }
        if pending > 0 {
            opt.clip_and_step(&mut verifier.params_mut())?;
        }

        let ckpt = run.checkpoint_path(1, epoch);
        verifier.save(&ckpt)?;
        let eer = evaluate_epoch(&mut verifier, &mut Enhancer::None, &trials, &val_audio, stft)?;
        eers.push(eer);
        let record = EpochRecord {
            phase: 1,
            epoch,
            step_size: cfg.step_size,
            train_loss: loss_sum / store.items.len() as f64,
            train_accuracy: Some(correct as f64 / store.items.len() as f64),
            criterion: "val_eer".into(),
            criterion_value: eer,
            checkpoint: ckpt.display().to_string(),
        };
        run.append_metrics(&record)?;
        history.push(record);
    }

    let best = select_best(&eers).expect("at least one epoch");
    let selected = run.checkpoint_path(1, best);
    run.write_selection(&selected, "val_eer", eers[best])?;
    Ok(TrainOutcome {
        selected_checkpoint: selected,
        best_epoch: best,
        history,
    })
}
