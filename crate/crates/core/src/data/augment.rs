//! Corpus corruption: random per-utterance dev augmentation and the fixed
//! (category, SNR) test-condition grid.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use super::{
    AugmentationPlan, Manifest, ManifestEntry, NoiseCategory, NoisePool, NoiseSource, NoiseSpec,
    PlanEntry, Split,
};
use crate::dsp::{self, Snr, Spectrogram, Waveform};
use crate::error::{Error, Result};

/// Dev SNRs are uniform in linear scale on (0, 20].
pub const DEV_SNR_LINEAR_MAX: f64 = 20.0;
/// Test-condition SNR grid in dB.
pub const TEST_SNRS_DB: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];

/// One generated condition cell; audio lands under
/// `<root>/<category>/<label>/<utt_id>.wav`.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub category: NoiseCategory,
    pub label: String,
    /// Additive cells carry their dB value; reverb cells do not.
    pub snr_db: Option<f64>,
}

impl Condition {
    pub fn rel_dir(&self) -> PathBuf {
        PathBuf::from(self.category.as_str()).join(&self.label)
    }
}

/// Pick a source of `cat`, skipping babble that contains the utterance's own
/// speaker.
fn pick_source<'p>(
    pool: &'p NoisePool,
    cat: NoiseCategory,
    speaker: &str,
    rng: &mut ChaCha12Rng,
) -> Result<&'p NoiseSource> {
    let candidates: Vec<&NoiseSource> = pool
        .require_category(cat)?
        .into_iter()
        .filter(|s| !s.speakers.iter().any(|sp| sp == speaker))
        .collect();
    if candidates.is_empty() {
        return Err(Error::Data(format!(
            "no {} source available for speaker {:?} (all contain that speaker)",
            cat.as_str(),
            speaker
        )));
    }
    Ok(candidates[rng.gen_range(0..candidates.len())])
}

fn render_one(
    entry: &ManifestEntry,
    plan: &PlanEntry,
    pool: &NoisePool,
    out_path: &Path,
) -> Result<ManifestEntry> {
    let clean = dsp::read_wav(&entry.path)?;
    let source = pool
        .sources
        .iter()
        .find(|s| s.id == plan.spec.noise_source_id)
        .ok_or_else(|| {
            Error::Data(format!(
                "plan references unknown noise source {:?}",
                plan.spec.noise_source_id
            ))
        })?;
    let noise = dsp::read_wav(&source.path)?;
    let corrupted: Waveform = match plan.spec.category {
        NoiseCategory::Reverb => dsp::rir_convolve(&clean, &noise)?,
        _ => {
            let snr = plan.spec.snr.ok_or_else(|| {
                Error::Data("additive plan entry is missing its SNR".into())
            })?;
            dsp::mix_at_snr_offset(&clean, &noise, snr, plan.noise_offset)?
        }
    };
    if let Some(dir) = out_path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    dsp::write_wav(out_path, &corrupted)?;
    Ok(ManifestEntry {
        utterance_id: plan.utterance_id.clone(),
        speaker_id: entry.speaker_id.clone(),
        path: out_path.to_path_buf(),
        duration_secs: corrupted.duration_secs(),
    })
}

/// The random-draw half of dev augmentation: one condition per utterance,
/// category uniform over all four, additive SNR uniform in linear (0, 20].
pub fn plan_dev_augmented(dev: &Manifest, pool: &NoisePool, seed: u64) -> Result<Vec<PlanEntry>> {
    for cat in NoiseCategory::ALL {
        pool.require_category(cat)?;
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut plans = Vec::with_capacity(dev.entries.len());
    for entry in &dev.entries {
        let category = NoiseCategory::ALL[rng.gen_range(0..NoiseCategory::ALL.len())];
        let source = pick_source(pool, category, &entry.speaker_id, &mut rng)?;
        let snr = match category {
            NoiseCategory::Reverb => None,
            _ => {
                let mut v = rng.gen_range(0.0..DEV_SNR_LINEAR_MAX);
                while v == 0.0 {
                    v = rng.gen_range(0.0..DEV_SNR_LINEAR_MAX);
                }
                Some(Snr::Linear(v))
            }
        };
        let spec = NoiseSpec {
            category,
            snr,
            noise_source_id: source.id.clone(),
        };
        spec.validate()?;
        plans.push(PlanEntry {
            utterance_id: format!("{}_aug", entry.utterance_id),
            spec,
            noise_offset: rng.gen::<u32>() as usize,
        });
    }
    Ok(plans)
}

/// One corrupted copy per dev utterance. Returns the augmented manifest
/// (ids suffixed `_aug`) and the plan that reproduces it.
pub fn build_dev_augmented(
    dev: &Manifest,
    pool: &NoisePool,
    seed: u64,
    out_root: &Path,
) -> Result<(Manifest, AugmentationPlan)> {
    let plans = plan_dev_augmented(dev, pool, seed)?;

    let entries: Vec<ManifestEntry> = dev
        .entries
        .par_iter()
        .zip(plans.par_iter())
        .map(|(entry, plan)| {
            let label = match plan.spec.category {
                NoiseCategory::Reverb => "rir".to_string(),
                _ => "rand".to_string(),
            };
            let out_path = out_root
                .join(plan.spec.category.as_str())
                .join(label)
                .join(format!("{}.wav", plan.utterance_id));
            render_one(entry, plan, pool, &out_path)
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest::new(Split::Dev, entries)?;
    let plan = AugmentationPlan {
        seed,
        partition: pool.partition,
        entries: plans,
    };
    Ok((manifest, plan))
}

fn reverb_classes(pool: &NoisePool) -> Result<Vec<(String, Vec<&NoiseSource>)>> {
    let mut classes: Vec<(String, Vec<&NoiseSource>)> = Vec::new();
    for class in ["small", "large"] {
        let sources: Vec<&NoiseSource> = pool
            .require_category(NoiseCategory::Reverb)?
            .into_iter()
            .filter(|s| s.id.contains(class))
            .collect();
        if sources.is_empty() {
            return Err(Error::Data(format!(
                "noise pool has no {}-room impulse responses",
                class
            )));
        }
        classes.push((class.to_string(), sources));
    }
    Ok(classes)
}

/// The full condition grid: each additive category at every SNR in
/// [`TEST_SNRS_DB`], plus small-room and large-room reverb cells. Every cell
/// corrupts the whole test manifest (utterance ids unchanged). `dev_pool`,
/// when given, is checked for partition disjointness.
pub fn build_test_conditions(
    test: &Manifest,
    pool: &NoisePool,
    dev_pool: Option<&NoisePool>,
    seed: u64,
    out_root: &Path,
) -> Result<Vec<(Condition, Manifest)>> {
    if let Some(dev) = dev_pool {
        pool.assert_disjoint(dev)?;
    }
    let mut cells: Vec<Condition> = Vec::new();
    for cat in NoiseCategory::ADDITIVE {
        for &snr in &TEST_SNRS_DB {
            cells.push(Condition {
                category: cat,
                label: format!("{}", snr as i64),
                snr_db: Some(snr),
            });
        }
    }
    for (class, _) in reverb_classes(pool)? {
        cells.push(Condition {
            category: NoiseCategory::Reverb,
            label: class,
            snr_db: None,
        });
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        // Plan sequentially per cell, render in parallel.
        let mut plans = Vec::with_capacity(test.entries.len());
        for entry in &test.entries {
            let source = match cell.category {
                NoiseCategory::Reverb => {
                    let class_sources: Vec<&NoiseSource> = pool
                        .require_category(NoiseCategory::Reverb)?
                        .into_iter()
                        .filter(|s| s.id.contains(&cell.label))
                        .collect();
                    class_sources[rng.gen_range(0..class_sources.len())]
                }
                cat => pick_source(pool, cat, &entry.speaker_id, &mut rng)?,
            };
            plans.push(PlanEntry {
                utterance_id: entry.utterance_id.clone(),
                spec: NoiseSpec {
                    category: cell.category,
                    snr: cell.snr_db.map(Snr::Db),
                    noise_source_id: source.id.clone(),
                },
                noise_offset: rng.gen::<u32>() as usize,
            });
        }
        let dir = out_root.join(cell.rel_dir());
        let entries: Vec<ManifestEntry> = test
            .entries
            .par_iter()
            .zip(plans.par_iter())
            .map(|(entry, plan)| {
                let out_path = dir.join(format!("{}.wav", plan.utterance_id));
                render_one(entry, plan, pool, &out_path)
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest::new(Split::Test, entries)?;
        manifest.save(&dir.join("manifest.jsonl"))?;
        out.push((cell, manifest));
    }
    Ok(out)
}

/// Fixed-length training view of a spectrogram: random contiguous crop when
/// long enough, cyclic tiling of frames when shorter.
pub fn sample_segment<R: Rng>(s: &Spectrogram, len: usize, rng: &mut R) -> Result<Spectrogram> {
    let cols = s.values.cols;
    if cols == 0 || len == 0 {
        return Err(Error::InvalidArgument(
            "segment sampling needs at least one frame".into(),
        ));
    }
    let rows = s.values.rows;
    let mut out = crate::dsp::Matrix::zeros(rows, len);
    if cols >= len {
        let start = rng.gen_range(0..=cols - len);
        for r in 0..rows {
            for c in 0..len {
                out.set(r, c, s.values.get(r, start + c));
            }
        }
    } else {
        for r in 0..rows {
            for c in 0..len {
                out.set(r, c, s.values.get(r, c % cols));
            }
        }
    }
    Ok(Spectrogram {
        values: out,
        compression_exponent: s.compression_exponent,
    })
}
