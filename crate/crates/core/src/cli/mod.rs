//! Command-line surface: corpus synthesis, augmentation, the three training
//! runs, single-file enhancement, evaluation sweeps, and inspection reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    self, audio_index, build_dev_augmented, build_test_conditions, synth_toy_corpus, Manifest,
    NoiseCategory, NoisePool, SynthConfig, TEST_SNRS_DB,
};
use crate::dsp::{self, StftConfig};
use crate::error::{Error, Result};
use crate::eval::{self, ConditionReport, ConditionRow, Enhancer};
use crate::models::{
    enhance_to_waveform, load_model, Dae, DaeConfig, Masker, MaskerConfig, Model, VerifierConfig,
    FEATURE_COMPRESSION,
};
use crate::nn::{receptive_field, LayerSpec};
use crate::training::{
    self, load_pairs, parse_kv, train_dae, train_masker, train_verifier, DaeTrainConfig,
    MaskerTrainConfig, RunDir, VerifierTrainConfig,
};

/// Environment variable holding a default config-file path.
pub const CONFIG_ENV: &str = "MASKID_CONFIG";

#[derive(Debug, Parser)]
#[command(
    name = "maskid",
    about = "Speech enhancement trained through a frozen speaker verifier",
    version
)]
pub struct Cli {
    /// Worker-thread cap; 1 gives the bit-exact deterministic mode.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus and noise pools.
    Synth(SynthArgs),
    /// Corrupt a split with the noise pool (dev draw or test grid).
    Augment(AugmentArgs),
    /// Pre-train the speaker classifier.
    TrainVerifier(TrainVerifierArgs),
    /// Train the mask network against a frozen verifier checkpoint.
    TrainMasker(TrainMaskerArgs),
    /// Train the denoising-autoencoder baseline.
    TrainDae(TrainDaeArgs),
    /// Enhance a single wav file.
    Enhance(EnhanceArgs),
    /// Score trial lists over condition cells and write report tables.
    Evaluate(EvaluateArgs),
    /// Inspect checkpoints, audio, or frame-similarity structure.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub speakers: usize,
    #[arg(long, default_value_t = 20)]
    pub utts: usize,
    #[arg(long, default_value_t = 3.0)]
    pub seconds: f64,
    #[arg(long)]
    pub seed: u64,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Which protocol: `dev` (random draw) or `test` (condition grid).
    #[arg(long)]
    pub split: String,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    /// Other partition's pool, for the disjointness check (test split).
    #[arg(long)]
    pub other_pool: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CommonTrainArgs {
    #[arg(long)]
    pub train_manifest: PathBuf,
    #[arg(long)]
    pub val_manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Flat key=value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub segment_frames: Option<usize>,
    #[arg(long)]
    pub val_pairs: Option<usize>,
    /// Model scale: `toy` or `full`.
    #[arg(long, default_value = "toy")]
    pub model_size: String,
}

#[derive(Debug, Args)]
pub struct TrainVerifierArgs {
    #[command(flatten)]
    pub common: CommonTrainArgs,
}

#[derive(Debug, Args)]
pub struct TrainMaskerArgs {
    #[command(flatten)]
    pub common: CommonTrainArgs,
    /// Frozen verifier checkpoint (required).
    #[arg(long)]
    pub verifier: PathBuf,
    /// Read conv4-6 of the mask net as literal 5x5 kernels.
    #[arg(long)]
    pub literal_5x5: bool,
}

#[derive(Debug, Args)]
pub struct TrainDaeArgs {
    /// Corrupted training inputs.
    #[arg(long)]
    pub train_input: PathBuf,
    /// Clean training targets (matched by utterance id, `_aug` stripped).
    #[arg(long)]
    pub train_target: PathBuf,
    #[arg(long)]
    pub dev_input: PathBuf,
    #[arg(long)]
    pub dev_target: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "toy")]
    pub model_size: String,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Enhancement checkpoint (mask network or autoencoder).
    #[arg(long)]
    pub model: PathBuf,
    /// Also write the mask as PGM + CSV next to the output.
    #[arg(long)]
    pub emit_mask: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub verifier: PathBuf,
    #[arg(long)]
    pub masker: Option<PathBuf>,
    #[arg(long)]
    pub dae: Option<PathBuf>,
    /// Root of the generated condition cells.
    #[arg(long)]
    pub cells: PathBuf,
    /// Clean test manifest (adds the clean row and defines the trials).
    #[arg(long)]
    pub clean_manifest: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub trial_pairs: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Exit nonzero when any cell is missing.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Model checkpoint: prints the layer table with cumulative context.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Audio file: writes spectrogram CSV + PGM under --out.
    #[arg(long)]
    pub audio: Option<PathBuf>,
    /// Two wavs for a frame-level similarity heatmap (needs --verifier).
    #[arg(long, num_args = 2)]
    pub pair: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub verifier: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Refuse to write into an existing non-empty directory unless forced.
fn check_out_dir(path: &Path, force: bool) -> Result<()> {
    if path.exists() {
        let non_empty = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(Error::InvalidArgument(format!(
                "output directory {} is not empty; pass --force to overwrite",
                path.display()
            )));
        }
    }
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_resolved_config(dir: &Path, kv: &BTreeMap<String, String>) -> Result<()> {
    let path = dir.join("run_config.txt");
    std::fs::write(&path, training::format_kv(kv)).map_err(|e| Error::io(&path, e))
}

fn load_config_file(explicit: Option<&Path>) -> Result<BTreeMap<String, String>> {
    let path = match explicit {
        Some(p) => Some(p.to_path_buf()),
        None => std::env::var_os(CONFIG_ENV).map(PathBuf::from),
    };
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            parse_kv(&text)
        }
        None => Ok(BTreeMap::new()),
    }
}

fn kv_parse<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match kv.get(key) {
        None => Ok(None),
        Some(v) if v == "none" => Ok(None),
        Some(v) => v.parse::<T>().map(Some).map_err(|_| {
            Error::Config(format!("config key {} has unparsable value {:?}", key, v))
        }),
    }
}

fn resolve_common(
    args: &CommonTrainArgs,
    defaults: VerifierTrainConfig,
) -> Result<VerifierTrainConfig> {
    let file = load_config_file(args.config.as_deref())?;
    Ok(VerifierTrainConfig {
        epochs: args.epochs.or(kv_parse(&file, "epochs")?).unwrap_or(defaults.epochs),
        batch_size: args
            .batch_size
            .or(kv_parse(&file, "batch_size")?)
            .unwrap_or(defaults.batch_size),
        step_size: args
            .step_size
            .or(kv_parse(&file, "step_size")?)
            .unwrap_or(defaults.step_size),
        clip_norm: args.clip_norm.or(kv_parse(&file, "clip_norm")?),
        segment_frames: args
            .segment_frames
            .or(kv_parse(&file, "segment_frames")?)
            .unwrap_or(defaults.segment_frames),
        val_pairs: args
            .val_pairs
            .or(kv_parse(&file, "val_pairs")?)
            .unwrap_or(defaults.val_pairs),
        seed: args.seed,
    })
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    check_out_dir(&args.out, args.force)?;
    let cfg = SynthConfig {
        n_speakers: args.speakers,
        utts_per_speaker: args.utts,
        utt_seconds: args.seconds,
        seed: args.seed,
    };
    let corpus = synth_toy_corpus(&cfg, &args.out)?;
    let mut kv = BTreeMap::new();
    kv.insert("command".into(), "synth".into());
    kv.insert("speakers".into(), cfg.n_speakers.to_string());
    kv.insert("utts_per_speaker".into(), cfg.utts_per_speaker.to_string());
    kv.insert("utt_seconds".into(), cfg.utt_seconds.to_string());
    kv.insert("seed".into(), cfg.seed.to_string());
    write_resolved_config(&args.out, &kv)?;
    println!(
        "synth: {} dev utts, {} test utts, pools {}+{} sources -> {}",
        corpus.dev.entries.len(),
        corpus.test.entries.len(),
        corpus.dev_pool.sources.len(),
        corpus.test_pool.sources.len(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_augment(args: &AugmentArgs) -> Result<()> {
    check_out_dir(&args.out, args.force)?;
    let manifest = Manifest::load(&args.manifest)?;
    let pool = NoisePool::load(&args.pool)?;
    let mut kv = BTreeMap::new();
    kv.insert("command".into(), "augment".into());
    kv.insert("split".into(), args.split.clone());
    kv.insert("manifest".into(), args.manifest.display().to_string());
    kv.insert("pool".into(), args.pool.display().to_string());
    kv.insert("seed".into(), args.seed.to_string());
    match args.split.as_str() {
        "dev" => {
            let (aug, plan) = build_dev_augmented(&manifest, &pool, args.seed, &args.out)?;
            aug.save(&args.out.join("augmented_manifest.jsonl"))?;
            plan.save(&args.out.join("plan.jsonl"))?;
            write_resolved_config(&args.out, &kv)?;
            println!(
                "augment: {} corrupted utterances -> {}",
                aug.entries.len(),
                args.out.display()
            );
        }
        "test" => {
            let other = match &args.other_pool {
                Some(p) => Some(NoisePool::load(p)?),
                None => None,
            };
            let cells =
                build_test_conditions(&manifest, &pool, other.as_ref(), args.seed, &args.out)?;
            write_resolved_config(&args.out, &kv)?;
            println!(
                "augment: {} condition cells of {} utterances each -> {}",
                cells.len(),
                manifest.entries.len(),
                args.out.display()
            );
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "--split must be dev or test, got {:?}",
                other
            )))
        }
    }
    Ok(())
}

fn verifier_model_cfg(size: &str, seed: u64) -> Result<VerifierConfig> {
    match size {
        "toy" => Ok(VerifierConfig::toy(2, seed)),
        "full" => Ok(VerifierConfig::full(2, seed)),
        other => Err(Error::InvalidArgument(format!(
            "--model-size must be toy or full, got {:?}",
            other
        ))),
    }
}

pub fn cmd_train_verifier(args: &TrainVerifierArgs) -> Result<()> {
    check_out_dir(&args.common.out, true)?;
    let run = RunDir::create(&args.common.out)?;
    let cfg = resolve_common(&args.common, VerifierTrainConfig::default())?;
    let train = Manifest::load(&args.common.train_manifest)?;
    let val = Manifest::load(&args.common.val_manifest)?;
    let model_cfg = verifier_model_cfg(&args.common.model_size, cfg.seed)?;
    let out = train_verifier(model_cfg, &cfg, &train, &val, &StftConfig::default(), &run)?;
    println!(
        "train-verifier: best epoch {} ({}), checkpoint {}",
        out.best_epoch,
        out.history[out.best_epoch].criterion_value,
        out.selected_checkpoint.display()
    );
    Ok(())
}

pub fn cmd_train_masker(args: &TrainMaskerArgs) -> Result<()> {
    check_out_dir(&args.common.out, true)?;
    let run = RunDir::create(&args.common.out)?;
    let v = resolve_common(&args.common, VerifierTrainConfig::default())?;
    let cfg = MaskerTrainConfig {
        epochs: v.epochs,
        batch_size: v.batch_size,
        step_size: v.step_size,
        clip_norm: v.clip_norm,
        segment_frames: v.segment_frames,
        val_pairs: v.val_pairs,
        seed: v.seed,
    };
    let train = Manifest::load(&args.common.train_manifest)?;
    let val = Manifest::load(&args.common.val_manifest)?;
    let mut model_cfg = match args.common.model_size.as_str() {
        "toy" => MaskerConfig::toy(cfg.seed),
        "full" => MaskerConfig::full(cfg.seed),
        other => {
            return Err(Error::InvalidArgument(format!(
                "--model-size must be toy or full, got {:?}",
                other
            )))
        }
    };
    model_cfg.literal_5x5 = args.literal_5x5;
    let out = train_masker(
        model_cfg,
        &cfg,
        &train,
        &val,
        &args.verifier,
        &StftConfig::default(),
        &run,
    )?;
    println!(
        "train-masker: best epoch {} ({}), checkpoint {}",
        out.best_epoch,
        out.history[out.best_epoch].criterion_value,
        out.selected_checkpoint.display()
    );
    Ok(())
}

/// Pair corrupted inputs with clean targets by utterance id; a trailing
/// `_aug` on the input id is stripped before matching.
pub fn pair_by_id(input: &Manifest, target: &Manifest) -> Result<Vec<(PathBuf, PathBuf)>> {
    let targets: BTreeMap<&str, &Path> = target
        .entries
        .iter()
        .map(|e| (e.utterance_id.as_str(), e.path.as_path()))
        .collect();
    let mut pairs = Vec::with_capacity(input.entries.len());
    let mut missing = Vec::new();
    for e in &input.entries {
        let key = e.utterance_id.strip_suffix("_aug").unwrap_or(&e.utterance_id);
        match targets.get(key) {
            Some(t) => pairs.push((e.path.clone(), t.to_path_buf())),
            None => missing.push(e.utterance_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "no clean target for: {}",
            missing.join(", ")
        )));
    }
    Ok(pairs)
}

pub fn cmd_train_dae(args: &TrainDaeArgs) -> Result<()> {
    check_out_dir(&args.out, true)?;
    let run = RunDir::create(&args.out)?;
    let file = load_config_file(args.config.as_deref())?;
    let d = DaeTrainConfig::default();
    let cfg = DaeTrainConfig {
        phase1_epochs: kv_parse(&file, "phase1_epochs")?.unwrap_or(d.phase1_epochs),
        phase1_step_size: kv_parse(&file, "phase1_step_size")?.unwrap_or(d.phase1_step_size),
        phase2_epochs: kv_parse(&file, "phase2_epochs")?.unwrap_or(d.phase2_epochs),
        phase2_step_size: kv_parse(&file, "phase2_step_size")?.unwrap_or(d.phase2_step_size),
        phase2_decay: kv_parse(&file, "phase2_decay")?.unwrap_or(d.phase2_decay),
        clip_norm: kv_parse(&file, "clip_norm")?.unwrap_or(d.clip_norm),
        seed: args.seed,
    };
    let stft = StftConfig::default();
    let train_pairs = pair_by_id(
        &Manifest::load(&args.train_input)?,
        &Manifest::load(&args.train_target)?,
    )?;
    let dev_pairs = pair_by_id(
        &Manifest::load(&args.dev_input)?,
        &Manifest::load(&args.dev_target)?,
    )?;
    let train_feats = load_pairs(&train_pairs, &stft)?;
    let dev_feats = load_pairs(&dev_pairs, &stft)?;
    let model_cfg = match args.model_size.as_str() {
        "toy" => DaeConfig::toy(cfg.seed),
        "full" => DaeConfig::full(cfg.seed),
        other => {
            return Err(Error::InvalidArgument(format!(
                "--model-size must be toy or full, got {:?}",
                other
            )))
        }
    };
    let out = train_dae(model_cfg, &cfg, &train_feats, &dev_feats, &run)?;
    println!(
        "train-dae: best epoch index {} ({}), checkpoint {}",
        out.best_epoch,
        out.history[out.best_epoch].criterion_value,
        out.selected_checkpoint.display()
    );
    Ok(())
}

pub fn cmd_enhance(args: &EnhanceArgs) -> Result<()> {
    let wave = dsp::read_wav(&args.input)?;
    if wave.sample_rate != 16_000 {
        return Err(Error::Data(format!(
            "{}: expected 16 kHz input, got {} Hz",
            args.input.display(),
            wave.sample_rate
        )));
    }
    if let Some(dir) = args.output.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let stft = StftConfig::default();
    let spec = dsp::stft(&wave, &stft)?;
    let raw = dsp::Spectrogram {
        values: spec.magnitude.clone(),
        compression_exponent: 1.0,
    };
    let compressed = dsp::compress(&raw, FEATURE_COMPRESSION)?;

    let enhanced = match load_model(&args.model)? {
        Model::Masker(mut m) => {
            let (mask, enhanced) = m.apply_mask(&compressed)?;
            if args.emit_mask {
                let base = args.output.with_extension("");
                let csv = base.with_extension("mask.csv");
                let pgm = base.with_extension("mask.pgm");
                dsp::write_csv(&csv, &mask)?;
                dsp::write_pgm(&pgm, &mask)?;
                println!("mask -> {} and {}", csv.display(), pgm.display());
            }
            enhanced
        }
        Model::Dae(mut d) => {
            if args.emit_mask {
                return Err(Error::InvalidArgument(
                    "--emit-mask needs a mask-network checkpoint".into(),
                ));
            }
            d.enhance(&compressed)?
        }
        Model::Verifier(_) => {
            return Err(Error::InvalidArgument(
                "enhance needs a mask or autoencoder checkpoint, not a verifier".into(),
            ))
        }
    };
    let out_wave = enhance_to_waveform(&enhanced, &spec, &stft)?;
    dsp::write_wav(&args.output, &out_wave)?;
    println!(
        "enhance: {} ({} samples) -> {}",
        args.input.display(),
        out_wave.len(),
        args.output.display()
    );
    Ok(())
}

/// The expected cell grid, mirrored from the augmentation layout.
fn expected_cells() -> Vec<(NoiseCategory, String, Option<f64>)> {
    let mut cells = Vec::new();
    for cat in NoiseCategory::ADDITIVE {
        for &snr in &TEST_SNRS_DB {
            cells.push((cat, format!("{}", snr as i64), Some(snr)));
        }
    }
    for class in ["small", "large"] {
        cells.push((NoiseCategory::Reverb, class.to_string(), None));
    }
    cells
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    check_out_dir(&args.out, true)?;
    let clean = Manifest::load(&args.clean_manifest)?;
    let trials = data::verification_trials(&clean, args.trial_pairs, args.seed)?;
    let stft = StftConfig::default();

    let mut verifier = match load_model(&args.verifier)? {
        Model::Verifier(v) => v,
        _ => return Err(Error::Data("--verifier is not a verifier checkpoint".into())),
    };
    let mut masker: Option<Masker> = match &args.masker {
        Some(p) => match load_model(p)? {
            Model::Masker(m) => Some(m),
            _ => return Err(Error::Data("--masker is not a mask checkpoint".into())),
        },
        None => None,
    };
    let mut dae: Option<Dae> = match &args.dae {
        Some(p) => match load_model(p)? {
            Model::Dae(d) => Some(d),
            _ => return Err(Error::Data("--dae is not an autoencoder checkpoint".into())),
        },
        None => None,
    };

    let mut columns: Vec<String> = vec!["none".into()];
    if masker.is_some() {
        columns.push("masker".into());
    }
    if dae.is_some() {
        columns.push("dae".into());
    }

    // Clean row first, then every cell of the expected grid.
    let mut conditions: Vec<(String, Option<f64>, Option<Manifest>)> =
        vec![("clean".into(), None, Some(clean.clone()))];
    for (cat, label, snr) in expected_cells() {
        let manifest_path = args
            .cells
            .join(cat.as_str())
            .join(&label)
            .join("manifest.jsonl");
        let manifest = if manifest_path.is_file() {
            Some(Manifest::load(&manifest_path)?)
        } else {
            None
        };
        let row_cat = match cat {
            NoiseCategory::Reverb => format!("reverb-{}", label),
            other => other.as_str().to_string(),
        };
        conditions.push((row_cat, snr, manifest));
    }

    let scores_dir = args.out.join("scores");
    std::fs::create_dir_all(&scores_dir).map_err(|e| Error::io(&scores_dir, e))?;
    let mut rows = Vec::with_capacity(conditions.len());
    for (row_cat, snr_db, manifest) in &conditions {
        let mut results: Vec<(String, Option<(f64, f64)>)> = Vec::new();
        match manifest {
            None => {
                for col in &columns {
                    results.push((col.clone(), None));
                }
            }
            Some(m) => {
                let audio = audio_index(m);
                for col in &columns {
                    let mut enhancer = match col.as_str() {
                        "masker" => Enhancer::Masker(masker.as_mut().unwrap()),
                        "dae" => Enhancer::Dae(dae.as_mut().unwrap()),
                        _ => Enhancer::None,
                    };
                    let mut cache = eval::EmbeddingCache::new();
                    let set = eval::score_trials(
                        &mut verifier,
                        &mut enhancer,
                        &trials,
                        &audio,
                        &stft,
                        &mut cache,
                    )?;
                    let snr_tag = snr_db.map(|s| format!("{}", s as i64)).unwrap_or_default();
                    let name = format!("{}{}_{}.txt", row_cat, snr_tag, col);
                    eval::write_score_set(&set, &scores_dir.join(name))?;
                    results.push((col.clone(), Some((eval::eer(&set)?, eval::dcf_avg(&set)?))));
                }
            }
        }
        rows.push(ConditionRow {
            category: row_cat.clone(),
            snr_db: *snr_db,
            results,
        });
    }
    let report = ConditionReport { rows };
    let text = report.to_text();
    std::fs::write(args.out.join("report.txt"), &text)
        .map_err(|e| Error::io(args.out.join("report.txt"), e))?;
    std::fs::write(args.out.join("report.csv"), report.to_csv())
        .map_err(|e| Error::io(args.out.join("report.csv"), e))?;
    let mut kv = BTreeMap::new();
    kv.insert("command".into(), "evaluate".into());
    kv.insert("verifier".into(), args.verifier.display().to_string());
    kv.insert("cells".into(), args.cells.display().to_string());
    kv.insert("trial_pairs".into(), args.trial_pairs.to_string());
    kv.insert("seed".into(), args.seed.to_string());
    kv.insert("columns".into(), columns.join(","));
    write_resolved_config(&args.out, &kv)?;
    print!("{}", text);
    if report.has_absent_cells() {
        if args.strict {
            return Err(Error::Data(
                "one or more condition cells are missing (strict mode)".into(),
            ));
        }
        eprintln!("warning: some condition cells are missing; rows marked absent");
    }
    Ok(())
}

fn layer_table(specs: &[LayerSpec]) -> String {
    let mut out = String::from("layer  kind      detail                         context\n");
    for i in 0..specs.len() {
        let ctx = receptive_field(&specs[..=i]);
        let detail = match &specs[i] {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                dilation,
                ..
            } => format!(
                "conv2d    {}->{} k{}x{} d{}x{}",
                in_ch, out_ch, kernel.0, kernel.1, dilation.0, dilation.1
            ),
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                stride,
                ..
            } => format!("conv1d    {}->{} k{} s{}", in_ch, out_ch, kernel, stride),
            other => format!("{:?}", other),
        };
        out.push_str(&format!(
            "{:<6} {:<40} ({}, {})\n",
            i + 1,
            detail,
            ctx.0,
            ctx.1
        ));
    }
    out
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let mut did_anything = false;
    if let Some(ckpt) = &args.checkpoint {
        did_anything = true;
        let (kind, specs) = match load_model(ckpt)? {
            Model::Verifier(v) => ("verifier (frame layers)", v.conv.specs()),
            Model::Masker(m) => ("masker", m.graph.specs()),
            Model::Dae(d) => ("dae", d.graph.specs()),
        };
        println!("{}: {}", ckpt.display(), kind);
        print!("{}", layer_table(&specs));
    }
    if let Some(audio) = &args.audio {
        did_anything = true;
        let out = args.out.as_deref().ok_or_else(|| {
            Error::InvalidArgument("--audio inspection needs --out".into())
        })?;
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let wave = dsp::read_wav(audio)?;
        let spec = dsp::stft(&wave, &StftConfig::default())?;
        let compressed = dsp::compress(
            &dsp::Spectrogram {
                values: spec.magnitude.clone(),
                compression_exponent: 1.0,
            },
            FEATURE_COMPRESSION,
        )?;
        dsp::write_csv(&out.join("spectrogram.csv"), &compressed.values)?;
        dsp::write_pgm(&out.join("spectrogram.pgm"), &compressed.values)?;
        println!(
            "inspect: {} -> {} frames x {} bins, spectrogram written to {}",
            audio.display(),
            compressed.values.cols,
            compressed.values.rows,
            out.display()
        );
    }
    if let Some(pair) = &args.pair {
        did_anything = true;
        let verifier_path = args.verifier.as_deref().ok_or_else(|| {
            Error::InvalidArgument("--pair inspection needs --verifier".into())
        })?;
        let out = args.out.as_deref().ok_or_else(|| {
            Error::InvalidArgument("--pair inspection needs --out".into())
        })?;
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let mut verifier = match load_model(verifier_path)? {
            Model::Verifier(v) => v,
            _ => return Err(Error::Data("--verifier is not a verifier checkpoint".into())),
        };
        let mut frames = Vec::new();
        for p in pair {
            let features = eval::utterance_features(p, &StftConfig::default())?;
            let t = verifier.frame_features(&features)?;
            frames.push(crate::models::tensor_to_matrix(&t)?);
        }
        let sim = eval::frame_sim_matrix(&frames[0], &frames[1])?;
        dsp::write_csv(&out.join("frame_similarity.csv"), &sim)?;
        dsp::write_pgm(&out.join("frame_similarity.pgm"), &sim)?;
        println!(
            "inspect: {}x{} frame-similarity map written to {}",
            sim.rows,
            sim.cols,
            out.display()
        );
    }
    if !did_anything {
        return Err(Error::InvalidArgument(
            "inspect needs --checkpoint, --audio, or --pair".into(),
        ));
    }
    Ok(())
}

/// Configure the global worker pool; call once, before any parallel work.
pub fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool setup failed: {}", e)))?;
    }
    Ok(())
}

pub fn run(cli: &mut Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Augment(a) => cmd_augment(a),
        Command::TrainVerifier(a) => cmd_train_verifier(a),
        Command::TrainMasker(a) => cmd_train_masker(a),
        Command::TrainDae(a) => cmd_train_dae(a),
        Command::Enhance(a) => cmd_enhance(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}
