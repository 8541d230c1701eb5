//! Mask training against a frozen speaker classifier: only the cross-entropy
//! signal relayed through the frozen network updates the mask weights.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::verifier::TrainOutcome;
use super::{
    check_finite, evaluate_epoch, select_best, shuffled_indices, EpochRecord, FeatureStore, RunDir,
};
use crate::data::{audio_index, sample_segment, verification_trials, Manifest};
use crate::dsp::StftConfig;
use crate::error::{Error, Result};
use crate::eval::Enhancer;
use crate::models::{masked_ce_step, matrix_to_tensor, Masker, MaskerConfig, Verifier};
use crate::nn::{checkpoint, OptimKind, Optimizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskerTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub clip_norm: Option<f64>,
    pub segment_frames: usize,
    pub val_pairs: usize,
    pub seed: u64,
}

impl Default for MaskerTrainConfig {
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

impl MaskerTrainConfig {
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

fn param_snapshot(verifier: &Verifier) -> Vec<(String, Vec<u64>)> {
    verifier
        .params()
        .iter()
        .map(|p| {
            (
                p.name.clone(),
                p.value.data.iter().map(|v| v.to_bits()).collect(),
            )
        })
        .collect()
}

/// Train a mask network while the verifier stays frozen. The verifier
/// checkpoint is hashed before and after; any parameter drift aborts the run.
pub fn train_masker(
    mut model_cfg: MaskerConfig,
    cfg: &MaskerTrainConfig,
    train: &Manifest,
    val: &Manifest,
    verifier_ckpt: &Path,
    stft: &StftConfig,
    run: &RunDir,
) -> Result<TrainOutcome> {
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "epochs and batch_size must be positive".into(),
        ));
    }
    let ckpt_hash_before = checkpoint::sha256_hex(verifier_ckpt)?;
    let mut verifier = Verifier::load(verifier_ckpt)?;
    verifier.set_trainable(false);
    let frozen_before = param_snapshot(&verifier);

    let store = FeatureStore::load(train, stft)?;
    // Label indices follow the sorted speaker list, the same convention the
    // verifier was trained with; the head must match the speaker count.
    if store.speakers.len() != verifier.cfg.n_speakers {
        return Err(Error::Data(format!(
            "training manifest has {} speakers but the verifier head expects {}",
            store.speakers.len(),
            verifier.cfg.n_speakers
        )));
    }
    model_cfg.n_bins = verifier.cfg.n_bins;
    let mut masker = Masker::build(model_cfg)?;

    let mut kv = cfg.to_kv();
    kv.insert("model".into(), "masker".into());
    kv.insert("verifier_checkpoint".into(), verifier_ckpt.display().to_string());
    kv.insert("verifier_sha256".into(), ckpt_hash_before.clone());
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
        let mut pending = 0usize;
        for (step, &i) in order.iter().enumerate() {
            let (_, label, feats) = &store.items[i];
            let seg = sample_segment(feats, cfg.segment_frames, &mut rng)?;
            let remaining = order.len() - (step - pending);
            let batch_len = cfg.batch_size.min(remaining);
            let loss = masked_ce_step(
                &mut masker,
                &mut verifier,
                &matrix_to_tensor(&seg.values),
                *label,
                1.0 / batch_len as f64,
            )?;
            check_finite(loss, "mask training")?;
            loss_sum += loss;
            pending += 1;
            if pending == batch_len {
                opt.clip_and_step(&mut masker.params_mut())?;
                // The frozen verifier accumulated pass-through gradients;
                // discard them so they cannot grow across batches.
                verifier.zero_grad();
                pending = 0;
            }
        }

        let ckpt = run.checkpoint_path(1, epoch);
        masker.save(&ckpt)?;
        let eer = evaluate_epoch(
            &mut verifier,
            &mut Enhancer::Masker(&mut masker),
            &trials,
            &val_audio,
            stft,
        )?;
        eers.push(eer);
        let record = EpochRecord {
            phase: 1,
            epoch,
            step_size: cfg.step_size,
            train_loss: loss_sum / store.items.len() as f64,
            train_accuracy: None,
            criterion: "val_eer".into(),
            criterion_value: eer,
            checkpoint: ckpt.display().to_string(),
        };
        run.append_metrics(&record)?;
        history.push(record);
    }

    // Freeze contract: bit-identical parameters and an untouched checkpoint.
    let frozen_after = param_snapshot(&verifier);
    if frozen_before != frozen_after {
        return Err(Error::Numeric(
            "freeze contract violated: verifier parameters changed during mask training".into(),
        ));
    }
    let ckpt_hash_after = checkpoint::sha256_hex(verifier_ckpt)?;
    if ckpt_hash_before != ckpt_hash_after {
        return Err(Error::Data(
            "verifier checkpoint file changed during mask training".into(),
        ));
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
