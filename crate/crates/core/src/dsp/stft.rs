use std::cell::RefCell;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

pub use rustfft::num_complex::Complex64 as Complex;

use super::WindowSpec;
use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// One-sided short-time spectrum, `n_frames x n_bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub coeffs: Vec<Complex>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub sample_rate: u32,
    pub window: WindowSpec,
    /// Length of the analysed signal, used to size the resynthesis.
    pub signal_len: usize,
    /// False when built from magnitudes alone; such spectrograms cannot be
    /// inverted.
    pub has_phase: bool,
}

impl Spectrogram {
    /// A phase-less spectrogram holding the given magnitudes (row-major).
    pub fn from_magnitudes(mags: &[f64], n_frames: usize, window: WindowSpec, sample_rate: u32) -> Self {
        let n_bins = window.n_bins();
        assert_eq!(mags.len(), n_frames * n_bins);
        Self {
            coeffs: mags.iter().map(|&m| Complex::new(m, 0.0)).collect(),
            n_frames,
            n_bins,
            sample_rate,
            window,
            signal_len: window.frame_len + n_frames.saturating_sub(1) * window.hop,
            has_phase: false,
        }
    }

    /// Centre frequency in Hz of every bin.
    pub fn bin_freqs(&self) -> Vec<f64> {
        let df = self.sample_rate as f64 / self.window.fft_size as f64;
        (0..self.n_bins).map(|k| k as f64 * df).collect()
    }

    pub fn frame(&self, t: usize) -> &[Complex] {
        &self.coeffs[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn frame_magnitudes(&self, t: usize) -> Vec<f64> {
        self.frame(t).iter().map(|c| c.norm()).collect()
    }

    pub fn frame_power(&self, t: usize) -> Vec<f64> {
        self.frame(t).iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Hann-windowed, zero-padded real FFT of every frame.
pub fn stft(samples: &[f64], w: &WindowSpec, sample_rate: u32) -> Result<Spectrogram> {
    w.validate()?;
    if samples.len() < w.frame_len {
        return Err(Error::SignalTooShort { len: samples.len(), frame_len: w.frame_len });
    }
    let n_frames = w.n_frames(samples.len());
    let n_bins = w.n_bins();
    let window = w.hann();
    let fft = forward_plan(w.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); w.fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut coeffs = Vec::with_capacity(n_frames * n_bins);
    for t in 0..n_frames {
        let frame = &samples[t * w.hop..t * w.hop + w.frame_len];
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < w.frame_len { Complex::new(frame[i] * window[i], 0.0) } else { Complex::new(0.0, 0.0) };
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        coeffs.extend_from_slice(&buf[..n_bins]);
    }
    Ok(Spectrogram { coeffs, n_frames, n_bins, sample_rate, window: *w, signal_len: samples.len(), has_phase: true })
}

/// Weighted overlap-add resynthesis normalized by the squared-window
/// envelope. Samples whose envelope is below 1e-8 are left at zero.
pub fn istft(spec: &Spectrogram) -> Result<Vec<f64>> {
    if !spec.has_phase {
        return Err(Error::MissingPhase);
    }
    let w = &spec.window;
    let n = w.fft_size;
    let window = w.hann();
    let fft = inverse_plan(n);
    let mut out = vec![0.0; spec.signal_len];
    let mut envelope = vec![0.0; spec.signal_len];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for t in 0..spec.n_frames {
        let frame = spec.frame(t);
        buf[..spec.n_bins].copy_from_slice(frame);
        for k in spec.n_bins..n {
            buf[k] = frame[n - k].conj();
        }
        // a real signal has real DC and Nyquist terms
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        fft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * w.hop;
        for i in 0..w.frame_len {
            if start + i >= out.len() {
                break;
            }
            out[start + i] += buf[i].re / n as f64 * window[i];
            envelope[start + i] += window[i] * window[i];
        }
    }
    for (s, e) in out.iter_mut().zip(&envelope) {
        *s = if *e < 1e-8 { 0.0 } else { *s / e };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_signal(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = crate::rng::stream(seed, &[]);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn naive_dft(x: &[f64], n: usize, bins: usize) -> Vec<Complex> {
        (0..bins)
            .map(|k| {
                x.iter().enumerate().fold(Complex::new(0.0, 0.0), |acc, (i, &v)| {
                    let phase = -std::f64::consts::TAU * (k * i) as f64 / n as f64;
                    acc + Complex::new(v * phase.cos(), v * phase.sin())
                })
            })
            .collect()
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let x: Vec<f64> = (0..4000).map(|i| (std::f64::consts::TAU * 1000.0 * i as f64 / 16_000.0).sin()).collect();
        let spec = stft(&x, &WindowSpec::default(), 16_000).unwrap();
        for t in 0..spec.n_frames {
            let m = spec.frame_magnitudes(t);
            let peak = (0..m.len()).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap();
            assert_eq!(peak, 32);
        }
        assert_eq!(spec.bin_freqs()[32], 1000.0);
    }

    #[test]
    fn zeros_in_zeros_out() {
        let spec = stft(&[0.0; 2000], &WindowSpec::default(), 16_000).unwrap();
        assert!(spec.coeffs.iter().all(|c| c.norm() == 0.0));
        assert!(istft(&spec).unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn fft_matches_direct_dft() {
        let w = WindowSpec::default();
        let x = random_signal(5, 400);
        let spec = stft(&x, &w, 16_000).unwrap();
        let windowed: Vec<f64> = x.iter().zip(w.hann()).map(|(a, b)| a * b).collect();
        let direct = naive_dft(&windowed, w.fft_size, w.n_bins());
        let worst = spec.frame(0).iter().zip(&direct).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "max deviation {worst}");
    }

    #[test]
    fn parseval_per_frame() {
        let w = WindowSpec::default();
        let x = random_signal(6, 8000);
        let spec = stft(&x, &w, 16_000).unwrap();
        let hann = w.hann();
        for t in 0..spec.n_frames {
            let p = spec.frame_power(t);
            let last = p.len() - 1;
            let spectral: f64 = p[0] + p[last] + 2.0 * p[1..last].iter().sum::<f64>();
            let frame = &x[t * w.hop..t * w.hop + w.frame_len];
            let temporal: f64 = frame.iter().zip(&hann).map(|(a, b)| (a * b).powi(2)).sum::<f64>() * w.fft_size as f64;
            assert!(((spectral - temporal) / temporal).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_interior() {
        let w = WindowSpec::default();
        let x = random_signal(7, 32_000);
        let spec = stft(&x, &w, 16_000).unwrap();
        let y = istft(&spec).unwrap();
        let covered = (spec.n_frames - 1) * w.hop + w.frame_len;
        let worst = (w.frame_len..covered - w.frame_len).map(|i| (x[i] - y[i]).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "round-trip error {worst}");
    }

    #[test]
    fn unit_mask_is_identity() {
        let w = WindowSpec::default();
        let x = random_signal(8, 4000);
        let spec = stft(&x, &w, 16_000).unwrap();
        let mut masked = spec.clone();
        for c in &mut masked.coeffs {
            *c *= Complex::from_polar(1.0, 0.0);
        }
        assert_eq!(istft(&masked).unwrap(), istft(&spec).unwrap());
    }

    #[test]
    fn phaseless_spectrogram_cannot_be_inverted() {
        let spec = Spectrogram::from_magnitudes(&[1.0; 257 * 2], 2, WindowSpec::default(), 16_000);
        assert!(matches!(istft(&spec), Err(Error::MissingPhase)));
    }
}
