//! Deterministic signal processing: framing, STFT/iSTFT, power-law
//! compression, SNR-controlled mixing and reverberation convolution.

mod export;
mod wav;

pub use export::{matrix_to_csv, matrix_to_pgm, write_csv, write_pgm};
pub use wav::{read_wav, write_wav};

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Mono audio at a fixed sample rate. Samples are nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample_rate must be > 0".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("waveform must be non-empty".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("waveform contains non-finite samples".into()));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean power over all samples.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

/// Analysis parameters: 25 ms periodic-Hann window, 10 ms hop, 512-point FFT.
/// At 16 kHz this yields a 400-sample window and 257 frequency bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_ms: 25.0,
            hop_ms: 10.0,
            fft_size: 512,
        }
    }
}

impl StftConfig {
    pub fn window_len(&self, sample_rate: u32) -> usize {
        (sample_rate as f64 * self.window_ms / 1000.0).round() as usize
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        (sample_rate as f64 * self.hop_ms / 1000.0).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    fn validate(&self, sample_rate: u32) -> Result<()> {
        let win = self.window_len(sample_rate);
        if win == 0 || self.hop_len(sample_rate) == 0 {
            return Err(Error::InvalidArgument(
                "window and hop must be at least one sample".into(),
            ));
        }
        if win > self.fft_size {
            return Err(Error::InvalidArgument(format!(
                "window of {} samples exceeds fft_size {}",
                win, self.fft_size
            )));
        }
        Ok(())
    }
}

/// Magnitude + phase pair, both [n_bins x frames].
#[derive(Debug, Clone)]
pub struct ComplexSpec {
    pub magnitude: Matrix,
    pub phase: Matrix,
    pub sample_rate: u32,
}

/// Nonnegative time-frequency matrix with its compression exponent
/// (0.3 for network features, 1.0 for raw magnitudes).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Matrix,
    pub compression_exponent: f64,
}

/// Dense row-major matrix, rows = frequency bins, cols = frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{}x{}={}", rows, cols, rows * cols),
                format!("{}", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Number of complete analysis frames: 1 + floor((n - window) / hop).
pub fn frame_count(n_samples: usize, cfg: &StftConfig, sample_rate: u32) -> Result<usize> {
    cfg.validate(sample_rate)?;
    let win = cfg.window_len(sample_rate);
    let hop = cfg.hop_len(sample_rate);
    if n_samples < win {
        return Err(Error::InvalidArgument(format!(
            "signal of {} samples is shorter than one {}-sample window",
            n_samples, win
        )));
    }
    Ok(1 + (n_samples - win) / hop)
}

/// Periodic Hann window of length `n`.
fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn forward_fft(fft_size: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(fft_size)
}

fn inverse_fft(fft_size: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_inverse(fft_size)
}

/// Short-time Fourier transform. Output is [fft_size/2+1 x frames].
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpec> {
    cfg.validate(w.sample_rate)?;
    let frames = frame_count(w.len(), cfg, w.sample_rate)?;
    let win_len = cfg.window_len(w.sample_rate);
    let hop = cfg.hop_len(w.sample_rate);
    let n_bins = cfg.n_bins();
    let window = hann_periodic(win_len);
    let fft = forward_fft(cfg.fft_size);

    let mut magnitude = Matrix::zeros(n_bins, frames);
    let mut phase = Matrix::zeros(n_bins, frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];

    for t in 0..frames {
        let start = t * hop;
        for i in 0..cfg.fft_size {
            let v = if i < win_len {
                w.samples[start + i] * window[i]
            } else {
                0.0
            };
            buf[i] = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (b, c) in buf.iter().take(n_bins).enumerate() {
            magnitude.set(b, t, c.norm());
            phase.set(b, t, c.arg());
        }
    }

    Ok(ComplexSpec {
        magnitude,
        phase,
        sample_rate: w.sample_rate,
    })
}

/// Inverse STFT by weighted overlap-add with synthesis-window normalization.
/// Reconstructs magnitudes under the given phase.
pub fn istft_with_phase(
    mag: &Matrix,
    phase: &Matrix,
    cfg: &StftConfig,
    sample_rate: u32,
) -> Result<Waveform> {
    cfg.validate(sample_rate)?;
    if !mag.same_shape(phase) {
        return Err(Error::shape(
            "istft_with_phase",
            format!("{}x{}", mag.rows, mag.cols),
            format!("{}x{}", phase.rows, phase.cols),
        ));
    }
    let n_bins = cfg.n_bins();
    if mag.rows != n_bins {
        return Err(Error::shape(
            "istft_with_phase",
            format!("{} bins", n_bins),
            format!("{} bins", mag.rows),
        ));
    }
    let frames = mag.cols;
    let win_len = cfg.window_len(sample_rate);
    let hop = cfg.hop_len(sample_rate);
    let window = hann_periodic(win_len);
    let ifft = inverse_fft(cfg.fft_size);

    let out_len = (frames - 1) * hop + win_len;
    let mut acc = vec![0.0f64; out_len];
    let mut norm = vec![0.0f64; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];

    for t in 0..frames {
        // Rebuild the full Hermitian spectrum from the half-spectrum.
        for b in 0..n_bins {
            let (m, p) = (mag.get(b, t), phase.get(b, t));
            buf[b] = Complex64::from_polar(m, p);
        }
        for b in n_bins..cfg.fft_size {
            buf[b] = buf[cfg.fft_size - b].conj();
        }
        ifft.process(&mut buf);
        let start = t * hop;
        for i in 0..win_len {
            let v = buf[i].re / cfg.fft_size as f64;
            acc[start + i] += v * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }

    for (a, n) in acc.iter_mut().zip(norm.iter()) {
        if *n > 1e-12 {
            *a /= *n;
        }
    }
    if acc.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("istft produced non-finite samples".into()));
    }
    Waveform::new(acc, sample_rate)
}

/// Elementwise power-law compression A^p (p in (0, 1]).
pub fn compress(s: &Spectrogram, p: f64) -> Result<Spectrogram> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "compression exponent {} outside (0, 1]",
            p
        )));
    }
    if s.values.data.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(
            "cannot compress a spectrogram with negative values".into(),
        ));
    }
    let mut out = s.values.clone();
    for v in &mut out.data {
        *v = v.powf(p);
    }
    Ok(Spectrogram {
        values: out,
        compression_exponent: s.compression_exponent * p,
    })
}

/// Inverse of [`compress`]: elementwise A^(1/p).
pub fn decompress(s: &Spectrogram, p: f64) -> Result<Spectrogram> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "compression exponent {} outside (0, 1]",
            p
        )));
    }
    if s.values.data.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(
            "cannot decompress a spectrogram with negative values".into(),
        ));
    }
    let mut out = s.values.clone();
    for v in &mut out.data {
        *v = v.powf(1.0 / p);
    }
    Ok(Spectrogram {
        values: out,
        compression_exponent: s.compression_exponent / p,
    })
}

/// Requested signal-to-noise ratio, either as a linear power ratio or in dB.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Snr {
    Linear(f64),
    Db(f64),
}

impl Snr {
    pub fn linear(&self) -> f64 {
        match *self {
            Snr::Linear(v) => v,
            Snr::Db(db) => 10f64.powf(db / 10.0),
        }
    }
}

/// Tile or crop `noise` to exactly `len` samples. `offset` selects the crop
/// start when the noise is longer than the target.
fn fit_noise(noise: &[f64], len: usize, offset: usize) -> Vec<f64> {
    if noise.len() >= len {
        let start = offset % (noise.len() - len + 1);
        noise[start..start + len].to_vec()
    } else {
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            let take = (len - out.len()).min(noise.len());
            out.extend_from_slice(&noise[..take]);
        }
        out
    }
}

/// Additive mixing at a requested SNR: clean + alpha * noise with
/// alpha = sqrt(P_clean / (snr_linear * P_noise)).
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr: Snr) -> Result<Waveform> {
    mix_at_snr_offset(clean, noise, snr, 0)
}

/// [`mix_at_snr`] with an explicit crop offset for noise longer than the
/// clean signal. Callers draw the offset from a seeded RNG.
pub fn mix_at_snr_offset(
    clean: &Waveform,
    noise: &Waveform,
    snr: Snr,
    noise_offset: usize,
) -> Result<Waveform> {
    if clean.sample_rate != noise.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "sample rate mismatch: clean {} Hz vs noise {} Hz",
            clean.sample_rate, noise.sample_rate
        )));
    }
    let snr_linear = snr.linear();
    if !(snr_linear > 0.0) || !snr_linear.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "snr must be positive in linear scale, got {}",
            snr_linear
        )));
    }
    let p_clean = clean.power();
    if p_clean <= 0.0 {
        return Err(Error::InvalidArgument("clean signal is silent".into()));
    }
    let fitted = fit_noise(&noise.samples, clean.len(), noise_offset);
    let p_noise = fitted.iter().map(|s| s * s).sum::<f64>() / fitted.len() as f64;
    if p_noise <= 0.0 {
        return Err(Error::InvalidArgument("noise signal is silent".into()));
    }
    let alpha = (p_clean / (snr_linear * p_noise)).sqrt();
    let samples = clean
        .samples
        .iter()
        .zip(fitted.iter())
        .map(|(c, n)| c + alpha * n)
        .collect();
    Waveform::new(samples, clean.sample_rate)
}

/// Full convolution with a room impulse response, truncated to the input
/// length and peak-normalized back to the input peak.
pub fn rir_convolve(w: &Waveform, rir: &Waveform) -> Result<Waveform> {
    if w.sample_rate != rir.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "sample rate mismatch: input {} Hz vs rir {} Hz",
            w.sample_rate, rir.sample_rate
        )));
    }
    if rir.is_empty() {
        return Err(Error::InvalidArgument("empty impulse response".into()));
    }
    let n = w.len();
    let mut out = vec![0.0f64; n];
    for (k, &h) in rir.samples.iter().enumerate() {
        if h == 0.0 || k >= n {
            continue;
        }
        for i in 0..n - k {
            out[i + k] += h * w.samples[i];
        }
    }
    let in_peak = w.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let out_peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if out_peak > 0.0 && in_peak > 0.0 {
        let g = in_peak / out_peak;
        for v in &mut out {
            *v *= g;
        }
    }
    Waveform::new(out, w.sample_rate)
}
