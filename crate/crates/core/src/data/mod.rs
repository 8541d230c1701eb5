//! Corpus plumbing: manifests, the synthetic desk-scale corpus, noise pools,
//! augmentation plans, and verification trial lists.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::Snr;
use crate::error::{Error, Result};
use crate::eval::Trial;

mod augment;
pub mod stats;
mod synth;

pub use augment::{
    build_dev_augmented, build_test_conditions, plan_dev_augmented, sample_segment, Condition,
    DEV_SNR_LINEAR_MAX, TEST_SNRS_DB,
};
pub use synth::{synth_toy_corpus, SynthConfig, ToyCorpus, ToySpeakerProfile};

pub const MANIFEST_FORMAT: &str = "maskid-manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const POOL_FORMAT: &str = "maskid-noise-pool";
pub const PLAN_FORMAT: &str = "maskid-augmentation-plan";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Dev,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    pub path: PathBuf,
    pub duration_secs: f64,
}

/// An utterance list for one split. Line-delimited JSON on disk: a header
/// record, then one entry per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub split: Split,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestHeader {
    format: String,
    version: u32,
    split: Split,
}

impl Manifest {
    pub fn new(split: Split, entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self { split, entries };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.utterance_id.as_str()) {
                return Err(Error::Data(format!(
                    "duplicate utterance_id {:?}",
                    e.utterance_id
                )));
            }
        }
        if self.split == Split::Dev {
            for (spk, n) in self.speaker_counts() {
                if n < 2 {
                    return Err(Error::Data(format!(
                        "dev speaker {:?} has {} utterance(s); need at least 2",
                        spk, n
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn speaker_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.speaker_id.as_str()).or_insert(0) += 1;
        }
        counts
    }

    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self
            .entries
            .iter()
            .map(|e| e.speaker_id.clone())
            .collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = serde_json::to_string(&ManifestHeader {
            format: MANIFEST_FORMAT.to_string(),
            version: MANIFEST_VERSION,
            split: self.split,
        })
        .map_err(|e| Error::Data(e.to_string()))?;
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).map_err(|e| Error::Data(e.to_string()))?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: ManifestHeader = match lines.next() {
            Some(l) => serde_json::from_str(l)
                .map_err(|e| Error::Data(format!("{}: bad manifest header: {}", path.display(), e)))?,
            None => return Err(Error::Data(format!("{}: empty manifest", path.display()))),
        };
        if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
            return Err(Error::Data(format!(
                "{}: unsupported manifest format {} v{}",
                path.display(),
                header.format,
                header.version
            )));
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let e: ManifestEntry = serde_json::from_str(line).map_err(|err| {
                Error::Data(format!("{} line {}: {}", path.display(), i + 2, err))
            })?;
            entries.push(e);
        }
        Manifest::new(header.split, entries)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseCategory {
    Noise,
    Music,
    Babble,
    Reverb,
}

impl NoiseCategory {
    pub const ALL: [NoiseCategory; 4] = [
        NoiseCategory::Noise,
        NoiseCategory::Music,
        NoiseCategory::Babble,
        NoiseCategory::Reverb,
    ];
    /// Categories mixed additively at an SNR (everything but reverb).
    pub const ADDITIVE: [NoiseCategory; 3] = [
        NoiseCategory::Noise,
        NoiseCategory::Music,
        NoiseCategory::Babble,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseCategory::Noise => "noise",
            NoiseCategory::Music => "music",
            NoiseCategory::Babble => "babble",
            NoiseCategory::Reverb => "reverb",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "noise" => Ok(NoiseCategory::Noise),
            "music" => Ok(NoiseCategory::Music),
            "babble" => Ok(NoiseCategory::Babble),
            "reverb" => Ok(NoiseCategory::Reverb),
            other => Err(Error::InvalidArgument(format!(
                "unknown noise category {:?}",
                other
            ))),
        }
    }
}

/// One corruption condition: reverb entries carry no SNR (convolution, not
/// addition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub category: NoiseCategory,
    pub snr: Option<Snr>,
    pub noise_source_id: String,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match (self.category, &self.snr) {
            (NoiseCategory::Reverb, Some(_)) => {
                Err(Error::Data("reverb conditions carry no SNR".into()))
            }
            (NoiseCategory::Reverb, None) => Ok(()),
            (_, None) => Err(Error::Data(format!(
                "additive category {} needs an SNR",
                self.category.as_str()
            ))),
            (_, Some(s)) => {
                if s.linear() <= 0.0 {
                    return Err(Error::Data(format!(
                        "SNR must be positive in linear scale, got {}",
                        s.linear()
                    )));
                }
                Ok(())
            }
        }
    }
}

/// One noise recording in a pool partition. `speakers` lists the toy
/// speakers audible in the file (babble) so augmentation can avoid mixing a
/// speaker with their own voice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSource {
    pub id: String,
    pub category: NoiseCategory,
    pub path: PathBuf,
    #[serde(default)]
    pub speakers: Vec<String>,
}

/// One partition (dev or test) of the noise pool. Partitions with any shared
/// source id are rejected when paired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePool {
    pub partition: Split,
    pub sources: Vec<NoiseSource>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PoolHeader {
    format: String,
    version: u32,
    partition: Split,
}

impl NoisePool {
    pub fn by_category(&self, cat: NoiseCategory) -> Vec<&NoiseSource> {
        self.sources.iter().filter(|s| s.category == cat).collect()
    }

    pub fn require_category(&self, cat: NoiseCategory) -> Result<Vec<&NoiseSource>> {
        let v = self.by_category(cat);
        if v.is_empty() {
            return Err(Error::Data(format!(
                "noise pool partition {} has no sources in category {}",
                self.partition.as_str(),
                cat.as_str()
            )));
        }
        Ok(v)
    }

    /// Error when two partitions share any source id.
    pub fn assert_disjoint(&self, other: &NoisePool) -> Result<()> {
        let mine: BTreeSet<&str> = self.sources.iter().map(|s| s.id.as_str()).collect();
        let shared: Vec<&str> = other
            .sources
            .iter()
            .map(|s| s.id.as_str())
            .filter(|id| mine.contains(id))
            .collect();
        if !shared.is_empty() {
            return Err(Error::Data(format!(
                "noise partitions overlap: {}",
                shared.join(", ")
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = serde_json::to_string(&PoolHeader {
            format: POOL_FORMAT.to_string(),
            version: MANIFEST_VERSION,
            partition: self.partition,
        })
        .map_err(|e| Error::Data(e.to_string()))?;
        out.push('\n');
        for s in &self.sources {
            out.push_str(&serde_json::to_string(s).map_err(|e| Error::Data(e.to_string()))?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: PoolHeader = match lines.next() {
            Some(l) => serde_json::from_str(l)
                .map_err(|e| Error::Data(format!("{}: bad pool header: {}", path.display(), e)))?,
            None => return Err(Error::Data(format!("{}: empty pool file", path.display()))),
        };
        if header.format != POOL_FORMAT {
            return Err(Error::Data(format!(
                "{}: not a noise pool file",
                path.display()
            )));
        }
        let mut sources = Vec::new();
        for (i, line) in lines.enumerate() {
            let s: NoiseSource = serde_json::from_str(line).map_err(|err| {
                Error::Data(format!("{} line {}: {}", path.display(), i + 2, err))
            })?;
            sources.push(s);
        }
        Ok(NoisePool {
            partition: header.partition,
            sources,
        })
    }
}

/// The reproducibility artifact for an augmentation run: which condition was
/// applied to which utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub utterance_id: String,
    pub spec: NoiseSpec,
    /// Starting sample of the noise excerpt (additive categories).
    pub noise_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub seed: u64,
    pub partition: Split,
    pub entries: Vec<PlanEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanHeader {
    format: String,
    version: u32,
    seed: u64,
    partition: Split,
}

impl AugmentationPlan {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = serde_json::to_string(&PlanHeader {
            format: PLAN_FORMAT.to_string(),
            version: MANIFEST_VERSION,
            seed: self.seed,
            partition: self.partition,
        })
        .map_err(|e| Error::Data(e.to_string()))?;
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).map_err(|e| Error::Data(e.to_string()))?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: PlanHeader = match lines.next() {
            Some(l) => serde_json::from_str(l)
                .map_err(|e| Error::Data(format!("{}: bad plan header: {}", path.display(), e)))?,
            None => return Err(Error::Data(format!("{}: empty plan file", path.display()))),
        };
        if header.format != PLAN_FORMAT {
            return Err(Error::Data(format!("{}: not a plan file", path.display())));
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let e: PlanEntry = serde_json::from_str(line).map_err(|err| {
                Error::Data(format!("{} line {}: {}", path.display(), i + 2, err))
            })?;
            entries.push(e);
        }
        Ok(AugmentationPlan {
            seed: header.seed,
            partition: header.partition,
            entries,
        })
    }
}

/// Balanced verification pairs: `n_pairs` same-speaker and `n_pairs`
/// different-speaker trials, no (u, u) pairs, deterministic given seed.
pub fn verification_trials(manifest: &Manifest, n_pairs: usize, seed: u64) -> Result<Vec<Trial>> {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    let mut by_speaker: BTreeMap<&str, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in &manifest.entries {
        by_speaker.entry(e.speaker_id.as_str()).or_default().push(e);
    }
    if by_speaker.len() < 2 {
        return Err(Error::Data(
            "verification trials need at least 2 speakers".into(),
        ));
    }
    if n_pairs > 0 {
        for (spk, utts) in &by_speaker {
            if utts.len() < 2 {
                return Err(Error::Data(format!(
                    "speaker {:?} has only {} utterance(s); positive pairs need 2",
                    spk,
                    utts.len()
                )));
            }
        }
    }
    let speakers: Vec<&str> = by_speaker.keys().copied().collect();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(2 * n_pairs);
    for _ in 0..n_pairs {
        let spk = speakers[rng.gen_range(0..speakers.len())];
        let pair: Vec<&&ManifestEntry> = by_speaker[spk].choose_multiple(&mut rng, 2).collect();
        trials.push(Trial {
            utt_a: pair[0].utterance_id.clone(),
            utt_b: pair[1].utterance_id.clone(),
            target: true,
        });
    }
    for _ in 0..n_pairs {
        let i = rng.gen_range(0..speakers.len());
        let j = loop {
            let j = rng.gen_range(0..speakers.len());
            if j != i {
                break j;
            }
        };
        let a = by_speaker[speakers[i]][rng.gen_range(0..by_speaker[speakers[i]].len())];
        let b = by_speaker[speakers[j]][rng.gen_range(0..by_speaker[speakers[j]].len())];
        trials.push(Trial {
            utt_a: a.utterance_id.clone(),
            utt_b: b.utterance_id.clone(),
            target: false,
        });
    }
    Ok(trials)
}

/// utterance_id -> audio path lookup for scoring.
pub fn audio_index(manifest: &Manifest) -> std::collections::HashMap<String, PathBuf> {
    manifest
        .entries
        .iter()
        .map(|e| (e.utterance_id.clone(), e.path.clone()))
        .collect()
}
