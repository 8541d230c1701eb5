//! Two-phase denoising-autoencoder schedule: plain SGD on whole utterances,
//! then a restart from the best development-loss checkpoint with a decaying
//! step size. Selection is always by development L2.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::verifier::TrainOutcome;
use super::{check_finite, select_best, shuffled_indices, EpochRecord, RunDir};
use crate::dsp::{Spectrogram, StftConfig};
use crate::error::{Error, Result};
use crate::eval::utterance_features;
use crate::models::{matrix_to_tensor, Dae, DaeConfig};
use crate::nn::{l2_loss, OptimKind, Optimizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaeTrainConfig {
    pub phase1_epochs: usize,
    pub phase1_step_size: f64,
    pub phase2_epochs: usize,
    pub phase2_step_size: f64,
    pub phase2_decay: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for DaeTrainConfig {
    fn default() -> Self {
        Self {
            phase1_epochs: 10,
            phase1_step_size: 0.05,
            phase2_epochs: 10,
            phase2_step_size: 0.00375,
            phase2_decay: 0.75,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl DaeTrainConfig {
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut kv = BTreeMap::new();
        kv.insert("phase1_epochs".into(), self.phase1_epochs.to_string());
        kv.insert("phase1_step_size".into(), self.phase1_step_size.to_string());
        kv.insert("phase2_epochs".into(), self.phase2_epochs.to_string());
        kv.insert("phase2_step_size".into(), self.phase2_step_size.to_string());
        kv.insert("phase2_decay".into(), self.phase2_decay.to_string());
        kv.insert("clip_norm".into(), self.clip_norm.to_string());
        kv.insert("seed".into(), self.seed.to_string());
        kv
    }
}

/// One (corrupted input, clean target) utterance pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePair {
    pub input: Spectrogram,
    pub target: Spectrogram,
}

/// Load (input path, target path) pairs into compressed features.
pub fn load_pairs(paths: &[(PathBuf, PathBuf)], stft: &StftConfig) -> Result<Vec<FeaturePair>> {
    paths
        .par_iter()
        .map(|(input, target)| {
            let input = utterance_features(input, stft)?;
            let target = utterance_features(target, stft)?;
            if input.values.cols != target.values.cols {
                return Err(Error::Data(
                    "input/target pair has mismatched frame counts".into(),
                ));
            }
            Ok(FeaturePair { input, target })
        })
        .collect()
}

fn mean_dev_l2(dae: &mut Dae, dev: &[FeaturePair]) -> Result<f64> {
    let mut sum = 0.0;
    for p in dev {
        let pred = dae.forward(&matrix_to_tensor(&p.input.values))?;
        let (loss, _) = l2_loss(&pred, &matrix_to_tensor(&p.target.values))?;
        sum += loss;
    }
    Ok(sum / dev.len() as f64)
}

/// Train the autoencoder on whole-utterance pairs. `train` drives gradients;
/// `dev` drives both the phase-2 restart point and the final selection.
pub fn train_dae(
    model_cfg: DaeConfig,
    cfg: &DaeTrainConfig,
    train: &[FeaturePair],
    dev: &[FeaturePair],
    run: &RunDir,
) -> Result<TrainOutcome> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Data(
            "autoencoder training needs nonempty train and dev pair lists".into(),
        ));
    }
    if cfg.phase1_epochs == 0 {
        return Err(Error::InvalidArgument("phase 1 needs at least one epoch".into()));
    }

    let mut kv = cfg.to_kv();
    kv.insert("model".into(), "dae".into());
    kv.insert("train_pairs".into(), train.len().to_string());
    kv.insert("dev_pairs".into(), dev.len().to_string());
    run.write_config(&kv)?;

    let mut dae = Dae::build(model_cfg)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut history: Vec<EpochRecord> = Vec::new();

    let run_phase = |dae: &mut Dae,
                         phase: u32,
                         epochs: usize,
                         step_of: &dyn Fn(usize) -> f64,
                         rng: &mut ChaCha12Rng,
                         history: &mut Vec<EpochRecord>|
     -> Result<Vec<f64>> {
        let mut dev_losses = Vec::with_capacity(epochs);
        let mut opt = Optimizer::new(OptimKind::Sgd, step_of(0), Some(cfg.clip_norm))?;
        for epoch in 0..epochs {
            let step_size = step_of(epoch);
            opt.set_step_size(step_size);
            let order = shuffled_indices(train.len(), rng);
            let mut loss_sum = 0.0;
            // Batch size is one utterance: step after every pair.
            for &i in &order {
                let pair = &train[i];
                let pred = dae.forward(&matrix_to_tensor(&pair.input.values))?;
                let (loss, grad) = l2_loss(&pred, &matrix_to_tensor(&pair.target.values))?;
                check_finite(loss, "autoencoder training")?;
                loss_sum += loss;
                dae.graph.backward(&grad)?;
                opt.clip_and_step(&mut dae.params_mut())?;
            }
            let ckpt = run.checkpoint_path(phase, epoch);
            dae.save(&ckpt)?;
            let dev_l2 = mean_dev_l2(dae, dev)?;
            dev_losses.push(dev_l2);
            let record = EpochRecord {
                phase,
                epoch,
                step_size,
                train_loss: loss_sum / train.len() as f64,
                train_accuracy: None,
                criterion: "dev_l2".into(),
                criterion_value: dev_l2,
                checkpoint: ckpt.display().to_string(),
            };
            run.append_metrics(&record)?;
            history.push(record);
        }
        Ok(dev_losses)
    };

    let p1 = run_phase(
        &mut dae,
        1,
        cfg.phase1_epochs,
        &|_| cfg.phase1_step_size,
        &mut rng,
        &mut history,
    )?;

    // Phase 2 restarts from the best phase-1 checkpoint by dev L2.
    let p1_best = select_best(&p1).expect("phase 1 has epochs");
    let mut dae = Dae::load(&run.checkpoint_path(1, p1_best))?;
    let p2 = run_phase(
        &mut dae,
        2,
        cfg.phase2_epochs,
        &|epoch| cfg.phase2_step_size * cfg.phase2_decay.powi(epoch as i32),
        &mut rng,
        &mut history,
    )?;

    // Final selection: smallest dev L2 over every logged epoch, earlier wins
    // ties.
    let all: Vec<f64> = history.iter().map(|r| r.criterion_value).collect();
    let best = select_best(&all).expect("nonempty history");
    let selected = PathBuf::from(&history[best].checkpoint);
    run.write_selection(&selected, "dev_l2", all[best])?;
    let _ = p2;
    Ok(TrainOutcome {
        selected_checkpoint: selected,
        best_epoch: best,
        history,
    })
}
