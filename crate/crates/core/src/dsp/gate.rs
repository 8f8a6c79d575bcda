//! Spectral gating: bins that do not rise above a per-bin noise floor are
//! attenuated.

use serde::{Deserialize, Serialize};

use super::{istft, stft, Complex, Spectrogram, WindowSpec};
use crate::dataset::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseGateParams {
    /// Percentile over time of each bin's magnitude taken as its noise floor.
    pub floor_percentile: f64,
    /// A bin passes when its magnitude exceeds `floor * threshold_factor`.
    pub threshold_factor: f64,
    /// Gain applied to bins that do not pass.
    pub min_gain: f64,
    /// Moving-average extent of the mask, in frames.
    pub smooth_time: usize,
    /// Moving-average extent of the mask, in bins.
    pub smooth_freq: usize,
}

impl Default for NoiseGateParams {
    fn default() -> Self {
        Self { floor_percentile: 20.0, threshold_factor: 3.0, min_gain: 0.1, smooth_time: 3, smooth_freq: 3 }
    }
}

impl NoiseGateParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.floor_percentile > 0.0
            && self.floor_percentile < 100.0
            && self.threshold_factor >= 1.0
            && (0.0..=1.0).contains(&self.min_gain)
            && self.smooth_time >= 1
            && self.smooth_freq >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("noise gate parameters out of range: {self:?}")))
        }
    }
}

/// Linear-interpolated percentile of an unsorted sample.
fn percentile(values: &mut [f64], pct: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let pos = pct / 100.0 * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (pos - lo as f64) * (values[hi] - values[lo])
}

/// Centred moving average along one axis of a row-major `rows x cols` grid.
fn smooth(grid: &[f64], rows: usize, cols: usize, extent: usize, along_rows: bool) -> Vec<f64> {
    if extent <= 1 {
        return grid.to_vec();
    }
    let before = extent / 2;
    let after = extent - 1 - before;
    let mut out = vec![0.0; grid.len()];
    for r in 0..rows {
        for c in 0..cols {
            let (pos, len) = if along_rows { (r, rows) } else { (c, cols) };
            let lo = pos.saturating_sub(before);
            let hi = (pos + after).min(len - 1);
            let sum: f64 = (lo..=hi)
                .map(|p| if along_rows { grid[p * cols + c] } else { grid[r * cols + p] })
                .sum();
            out[r * cols + c] = sum / (hi - lo + 1) as f64;
        }
    }
    out
}

/// Applies the smoothed gating mask to a spectrogram, returning the masked
/// spectrogram and the mask (row-major, one gain per coefficient).
pub fn gate_spectrogram(spec: &Spectrogram, p: &NoiseGateParams) -> Result<(Spectrogram, Vec<f64>)> {
    p.validate()?;
    let (frames, bins) = (spec.n_frames, spec.n_bins);
    let mags: Vec<f64> = spec.coeffs.iter().map(|c| c.norm()).collect();
    let floors: Vec<f64> = (0..bins)
        .map(|k| {
            let mut column: Vec<f64> = (0..frames).map(|t| mags[t * bins + k]).collect();
            percentile(&mut column, p.floor_percentile)
        })
        .collect();
    let raw: Vec<f64> = mags
        .iter()
        .enumerate()
        .map(|(i, &m)| if m > floors[i % bins] * p.threshold_factor { 1.0 } else { p.min_gain })
        .collect();
    let mask = smooth(&smooth(&raw, frames, bins, p.smooth_time, true), frames, bins, p.smooth_freq, false);
    let mut masked = spec.clone();
    for (c, &g) in masked.coeffs.iter_mut().zip(&mask) {
        *c *= Complex::new(g, 0.0);
    }
    Ok((masked, mask))
}

/// Spectral noise gate. The output is rescaled into `[-1, 1]` only when
/// resynthesis overshoots that range.
pub fn noise_gate(clip: &AudioClip, p: &NoiseGateParams, w: &WindowSpec) -> Result<AudioClip> {
    if clip.len() < w.frame_len {
        return Ok(clip.clone());
    }
    // Reflect-pad one frame on each side: near the ends the synthesis
    // envelope vanishes and would amplify masking artefacts, and the
    // padding also makes the last partial frame analysable.
    let pad = w.frame_len;
    let n = clip.len();
    let mut padded = Vec::with_capacity(n + 2 * pad + w.hop);
    padded.extend((1..=pad).rev().map(|i| clip.samples[i.min(n - 1)]));
    padded.extend_from_slice(&clip.samples);
    padded.extend((0..pad).map(|i| clip.samples[n.saturating_sub(2 + i).min(n - 1)]));
    let frames = 1 + (padded.len() - w.frame_len).div_ceil(w.hop);
    padded.resize(w.frame_len + (frames - 1) * w.hop, 0.0);
    let spec = stft(&padded, w, clip.sample_rate)?;
    let (masked, _) = gate_spectrogram(&spec, p)?;
    let out = istft(&masked)?;
    let mut out = out[pad..pad + n].to_vec();
    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 1.0 {
        out.iter_mut().for_each(|s| *s /= peak);
    }
    Ok(AudioClip::new(out, clip.sample_rate))
}
