//! Mel filterbank and cepstral coefficients.

use std::f64::consts::PI;

use super::FeatureConfig;
use crate::dsp::Spectrogram;

/// `n_frames x n_coeffs` cepstral coefficients, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix {
    pub values: Vec<f64>,
    pub n_frames: usize,
    pub n_coeffs: usize,
}

impl MfccMatrix {
    pub fn new(values: Vec<f64>, n_frames: usize, n_coeffs: usize) -> Self {
        assert_eq!(values.len(), n_frames * n_coeffs, "MFCC buffer does not match its shape");
        Self { values, n_frames, n_coeffs }
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_coeffs..(t + 1) * self.n_coeffs]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_frames).map(move |t| self.values[t * self.n_coeffs + c])
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, stored as `(first_bin, weights)`.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, fmin: f64, fmax: f64, bin_freqs: &[f64]) -> Self {
        let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let filters = (0..n_mels)
            .map(|m| {
                let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
                let weight = |f: f64| {
                    if f <= left || f >= right {
                        0.0
                    } else if f <= centre {
                        (f - left) / (centre - left)
                    } else {
                        (right - f) / (right - centre)
                    }
                };
                let first = bin_freqs.iter().position(|&f| f > left).unwrap_or(bin_freqs.len());
                let weights: Vec<f64> = bin_freqs[first..].iter().take_while(|&&f| f < right).map(|&f| weight(f)).collect();
                (first, weights)
            })
            .collect();
        Self { filters }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|(first, w)| w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Orthonormal DCT-II basis, `n_out x n_in`, row-major.
fn dct_matrix(n_in: usize, n_out: usize) -> Vec<f64> {
    let n = n_in as f64;
    let mut basis = Vec::with_capacity(n_in * n_out);
    for k in 0..n_out {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for i in 0..n_in {
            basis.push(scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos());
        }
    }
    basis
}

/// Log mel energies of every frame, floored at `cfg.log_floor`.
pub fn log_mel_energies(spec: &Spectrogram, cfg: &FeatureConfig) -> Vec<Vec<f64>> {
    let bank = MelFilterbank::new(cfg.n_mels, cfg.mel_fmin, cfg.mel_fmax, &spec.bin_freqs());
    (0..spec.n_frames)
        .map(|t| bank.apply(&spec.frame_power(t)).into_iter().map(|e| e.max(cfg.log_floor).ln()).collect())
        .collect()
}

/// Cepstral coefficients 0..n_mfcc of the log mel energies of each frame.
pub fn mfcc_from_log_mel(log_mel: &[Vec<f64>], n_mels: usize, n_mfcc: usize) -> MfccMatrix {
    let basis = dct_matrix(n_mels, n_mfcc);
    let mut values = Vec::with_capacity(log_mel.len() * n_mfcc);
    for frame in log_mel {
        for k in 0..n_mfcc {
            values.push(basis[k * n_mels..(k + 1) * n_mels].iter().zip(frame).map(|(a, b)| a * b).sum());
        }
    }
    MfccMatrix::new(values, log_mel.len(), n_mfcc)
}

/// Power spectrum → mel filterbank → log → orthonormal DCT-II.
pub fn mfcc(spec: &Spectrogram, cfg: &FeatureConfig) -> MfccMatrix {
    mfcc_from_log_mel(&log_mel_energies(spec, cfg), cfg.n_mels, cfg.n_mfcc)
}
