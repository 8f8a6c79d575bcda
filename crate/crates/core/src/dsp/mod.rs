//! Signal kernels: resampling, pre-emphasis, framing, STFT/iSTFT and the
//! spectral noise gate. Everything here is deterministic.

mod gate;
mod resample;
mod stft;

pub use gate::{gate_spectrogram, noise_gate, NoiseGateParams};
pub use resample::{resample, resample_by};
pub use stft::{istft, stft, Complex, Spectrogram};

use serde::{Deserialize, Serialize};

use crate::dataset::{normalize_duration, AudioClip, CLIP_SECONDS, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Framing and FFT parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { frame_len: 400, hop: 160, fft_size: 512 }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.frame_len || self.frame_len > self.fft_size || !self.fft_size.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "window needs 0 < hop <= frame_len <= fft_size (power of two), got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of whole frames in a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            1 + (len - self.frame_len) / self.hop
        }
    }

    /// Periodic Hann window of `frame_len` points.
    pub fn hann(&self) -> Vec<f64> {
        let n = self.frame_len as f64;
        (0..self.frame_len)
            .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n).cos())
            .collect()
    }
}

/// First-difference high-pass: `y[0] = x[0]`, `y[n] = x[n] - alpha * x[n-1]`.
pub fn pre_emphasis(samples: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut prev = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        out.push(if i == 0 { x } else { x - alpha * prev });
        prev = x;
    }
    out
}

/// Splits a signal into overlapping frames without padding.
pub fn frame_signal(samples: &[f64], w: &WindowSpec) -> Result<Vec<Vec<f64>>> {
    w.validate()?;
    if samples.len() < w.frame_len {
        return Err(Error::SignalTooShort { len: samples.len(), frame_len: w.frame_len });
    }
    Ok((0..w.n_frames(samples.len()))
        .map(|t| samples[t * w.hop..t * w.hop + w.frame_len].to_vec())
        .collect())
}

/// Preprocessing chain applied to every clip before feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub sample_rate: u32,
    pub duration_seconds: f64,
    pub pre_emphasis: f64,
    pub gate: NoiseGateParams,
    /// Skips the noise gate entirely when false.
    pub denoise: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            duration_seconds: CLIP_SECONDS,
            pre_emphasis: 0.97,
            gate: NoiseGateParams::default(),
            denoise: true,
        }
    }
}

/// Resample → duration normalization → noise gate → pre-emphasis.
pub fn preprocess(clip: &AudioClip, cfg: &PreprocessConfig, w: &WindowSpec) -> Result<AudioClip> {
    let clip = resample(clip, cfg.sample_rate);
    let clip = normalize_duration(&clip, cfg.duration_seconds);
    let clip = if cfg.denoise { noise_gate(&clip, &cfg.gate, w)? } else { clip };
    Ok(AudioClip::new(pre_emphasis(&clip.samples, cfg.pre_emphasis), clip.sample_rate))
}
