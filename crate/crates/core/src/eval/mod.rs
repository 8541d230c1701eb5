//! Verification scoring and metrics: cosine scores, EER, detection-cost
//! functions, per-condition report tables, and frame-level similarity
//! matrices.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::Matrix;
use crate::error::{Error, Result};

mod scoring;

pub use scoring::{score_trials, utterance_features, EmbeddingCache, Enhancer};

/// One verification trial: a pair of utterances and whether they share a
/// speaker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub utt_a: String,
    pub utt_b: String,
    pub target: bool,
}

/// A scored trial. `target` is ground truth, `score` is higher-is-same.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrial {
    pub utt_a: String,
    pub utt_b: String,
    pub score: f64,
    pub target: bool,
}

/// A full set of scored trials; must contain both classes before any error
/// rate is defined.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub trials: Vec<ScoredTrial>,
}

impl ScoreSet {
    pub fn new(trials: Vec<ScoredTrial>) -> Result<Self> {
        for t in &trials {
            if !t.score.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite score for trial ({}, {})",
                    t.utt_a, t.utt_b
                )));
            }
        }
        Ok(Self { trials })
    }

    fn split(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let targets: Vec<f64> = self
            .trials
            .iter()
            .filter(|t| t.target)
            .map(|t| t.score)
            .collect();
        let nontargets: Vec<f64> = self
            .trials
            .iter()
            .filter(|t| !t.target)
            .map(|t| t.score)
            .collect();
        if targets.is_empty() || nontargets.is_empty() {
            return Err(Error::Data(
                "score set needs at least one target and one nontarget trial".into(),
            ));
        }
        Ok((targets, nontargets))
    }

    /// One record per line: `utt_a utt_b score {target|nontarget}`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.trials {
            let label = if t.target { "target" } else { "nontarget" };
            let _ = writeln!(out, "{} {} {:.17} {}", t.utt_a, t.utt_b, t.score, label);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut trials = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(Error::Data(format!(
                    "score line {}: expected 4 fields, got {}",
                    i + 1,
                    parts.len()
                )));
            }
            let score: f64 = parts[2]
                .parse()
                .map_err(|_| Error::Data(format!("score line {}: bad score", i + 1)))?;
            let target = match parts[3] {
                "target" => true,
                "nontarget" => false,
                other => {
                    return Err(Error::Data(format!(
                        "score line {}: bad label {:?}",
                        i + 1,
                        other
                    )))
                }
            };
            trials.push(ScoredTrial {
                utt_a: parts[0].to_string(),
                utt_b: parts[1].to_string(),
                score,
                target,
            });
        }
        ScoreSet::new(trials)
    }
}

/// Detection-cost parameters. Unit costs with min-cost normalization are the
/// convention used for the reported tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl DcfParams {
    pub fn with_prior(p_target: f64) -> Result<Self> {
        let p = Self {
            p_target,
            c_miss: 1.0,
            c_fa: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "p_target must lie in (0,1), got {}",
                self.p_target
            )));
        }
        if self.c_miss <= 0.0 || self.c_fa <= 0.0 {
            return Err(Error::InvalidArgument("DCF costs must be positive".into()));
        }
        Ok(())
    }
}

/// cosine(a,b) = a.b / (|a||b|). Errors on dimension mismatch or a zero
/// vector (undefined direction).
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(
            "cosine",
            format!("[{}]", a.len()),
            format!("[{}]", b.len()),
        ));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Numeric(
            "cosine of a zero vector is undefined".into(),
        ));
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Operating points of the detection error tradeoff, one per distinct
/// threshold placement. `p_miss` is the target-below-threshold rate,
/// `p_fa` the nontarget-at-or-above rate.
fn det_points(targets: &[f64], nontargets: &[f64]) -> Vec<(f64, f64)> {
    // Sweep thresholds at every distinct score plus +inf (reject all).
    let mut scores: Vec<f64> = targets.iter().chain(nontargets.iter()).copied().collect();
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    scores.dedup();

    let nt = targets.len() as f64;
    let nn = nontargets.len() as f64;
    let mut points = Vec::with_capacity(scores.len() + 2);
    // Threshold below all scores: accept everything.
    points.push((0.0, 1.0));
    for &th in &scores {
        // Accept rule: score >= th is "same speaker".
        let miss = targets.iter().filter(|&&s| s < th).count() as f64 / nt;
        let fa = nontargets.iter().filter(|&&s| s >= th).count() as f64 / nn;
        points.push((miss, fa));
    }
    // Threshold above all scores: reject everything.
    points.push((1.0, 0.0));
    points
}

/// Equal error rate: the common value where the miss rate crosses the
/// false-accept rate, linearly interpolated between the two adjacent
/// operating points straddling the crossing.
pub fn eer(set: &ScoreSet) -> Result<f64> {
    let (targets, nontargets) = set.split()?;
    let points = det_points(&targets, &nontargets);
    for w in points.windows(2) {
        let (m0, f0) = w[0];
        let (m1, f1) = w[1];
        let d0 = f0 - m0;
        let d1 = f1 - m1;
        if d0 == 0.0 {
            return Ok(m0);
        }
        if d0 > 0.0 && d1 <= 0.0 {
            if d1 == 0.0 {
                return Ok(m1);
            }
            // Linear interpolation along the segment to the d = 0 crossing.
            let t = d0 / (d0 - d1);
            return Ok(m0 + t * (m1 - m0));
        }
    }
    // Sweep always starts with d > 0 and ends with d < 0, so the loop
    // cannot fall through; keep a defensive error rather than a panic.
    Err(Error::Numeric("no EER crossing found".into()))
}

/// Minimum normalized detection cost over all thresholds, capped at 1.0.
pub fn min_dcf(set: &ScoreSet, params: &DcfParams) -> Result<f64> {
    params.validate()?;
    let (targets, nontargets) = set.split()?;
    let points = det_points(&targets, &nontargets);
    let norm = (params.c_miss * params.p_target).min(params.c_fa * (1.0 - params.p_target));
    let mut best = f64::INFINITY;
    for (miss, fa) in points {
        let cost =
            params.c_miss * miss * params.p_target + params.c_fa * fa * (1.0 - params.p_target);
        best = best.min(cost);
    }
    Ok((best / norm).min(1.0))
}

/// Average of the minimum DCF at priors 0.01 and 0.001.
pub fn dcf_avg(set: &ScoreSet) -> Result<f64> {
    let a = min_dcf(set, &DcfParams::with_prior(0.01)?)?;
    let b = min_dcf(set, &DcfParams::with_prior(0.001)?)?;
    Ok((a + b) / 2.0)
}

/// DET curve operating points (miss, false-accept) as CSV for plotting.
pub fn det_curve_csv(set: &ScoreSet) -> Result<String> {
    let (targets, nontargets) = set.split()?;
    let mut out = String::from("p_miss,p_fa\n");
    for (miss, fa) in det_points(&targets, &nontargets) {
        let _ = writeln!(out, "{:.6},{:.6}", miss, fa);
    }
    Ok(out)
}

/// One row of the per-condition report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub category: String,
    /// None for clean and reverberation rows (no additive SNR).
    pub snr_db: Option<f64>,
    /// Column label -> (EER, DCF); None when the cell is absent.
    pub results: Vec<(String, Option<(f64, f64)>)>,
}

/// The full report table: EER percent (2 decimals) and DCF (3 decimals) per
/// condition and enhancement column.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub rows: Vec<ConditionRow>,
}

impl ConditionReport {
    pub fn columns(&self) -> Vec<String> {
        match self.rows.first() {
            Some(r) => r.results.iter().map(|(c, _)| c.clone()).collect(),
            None => Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let cols = self.columns();
        let mut header = format!("{:<10} {:>5}", "category", "snr");
        for c in &cols {
            header.push_str(&format!(" {:>9}-EER {:>9}-DCF", c, c));
        }
        let mut out = header.clone();
        out.push('\n');
        out.push_str(&"-".repeat(header.len()));
        out.push('\n');
        for row in &self.rows {
            let snr = match row.snr_db {
                Some(s) => format!("{:>5}", s),
                None => format!("{:>5}", "-"),
            };
            let _ = write!(out, "{:<10} {}", row.category, snr);
            for (_, cell) in &row.results {
                match cell {
                    Some((eer, dcf)) => {
                        let _ = write!(out, " {:>13.2} {:>13.3}", eer * 100.0, dcf);
                    }
                    None => {
                        let _ = write!(out, " {:>13} {:>13}", "absent", "absent");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let cols = self.columns();
        let mut out = String::from("category,snr_db");
        for c in &cols {
            let _ = write!(out, ",{}_eer_pct,{}_dcf", c, c);
        }
        out.push('\n');
        for row in &self.rows {
            let snr = row
                .snr_db
                .map(|s| format!("{}", s))
                .unwrap_or_default();
            let _ = write!(out, "{},{}", row.category, snr);
            for (_, cell) in &row.results {
                match cell {
                    Some((eer, dcf)) => {
                        let _ = write!(out, ",{:.2},{:.3}", eer * 100.0, dcf);
                    }
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn has_absent_cells(&self) -> bool {
        self.rows
            .iter()
            .any(|r| r.results.iter().any(|(_, c)| c.is_none()))
    }
}

/// Frame-level cosine similarity between two utterances' last-conv-layer
/// activations (pre-pooling): out[i][j] = cosine(frames1[i], frames2[j]).
pub fn frame_sim_matrix(frames_a: &Matrix, frames_b: &Matrix) -> Result<Matrix> {
    // Rows = feature dim, cols = frames; both taps come from the same layer.
    if frames_a.rows != frames_b.rows {
        return Err(Error::shape(
            "frame_sim_matrix",
            format!("[{}]", frames_a.rows),
            format!("[{}]", frames_b.rows),
        ));
    }
    let fa = frames_a.cols;
    let fb = frames_b.cols;
    let mut out = Matrix::zeros(fa, fb);
    let col = |m: &Matrix, j: usize| -> Vec<f64> { (0..m.rows).map(|i| m.get(i, j)).collect() };
    let cols_a: Vec<Vec<f64>> = (0..fa).map(|j| col(frames_a, j)).collect();
    let cols_b: Vec<Vec<f64>> = (0..fb).map(|j| col(frames_b, j)).collect();
    for i in 0..fa {
        for j in 0..fb {
            out.set(i, j, cosine(&cols_a[i], &cols_b[j])?);
        }
    }
    Ok(out)
}

pub fn write_score_set(set: &ScoreSet, path: &Path) -> Result<()> {
    std::fs::write(path, set.to_text()).map_err(|e| Error::io(path, e))
}

pub fn read_score_set(path: &Path) -> Result<ScoreSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScoreSet::from_text(&text)
}
