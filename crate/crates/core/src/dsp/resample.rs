//! Band-limited resampling by windowed-sinc interpolation.
//!
//! The interpolation kernel is a Kaiser-windowed sinc (beta 8.6) spanning
//! 64 zero crossings on each side, tabulated finely and read back with
//! linear interpolation.

use std::sync::OnceLock;

use crate::dataset::AudioClip;

const ZERO_CROSSINGS: usize = 64;
const KAISER_BETA: f64 = 8.6;
const TABLE_DENSITY: usize = 512;

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kernel samples at `u = i / TABLE_DENSITY` zero crossings, `u` in [0, 64].
fn kernel_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = ZERO_CROSSINGS * TABLE_DENSITY;
        let norm = bessel_i0(KAISER_BETA);
        let mut table: Vec<f64> = (0..=n)
            .map(|i| {
                let u = i as f64 / TABLE_DENSITY as f64;
                let r = u / ZERO_CROSSINGS as f64;
                let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm;
                let sinc = if i == 0 { 1.0 } else { (std::f64::consts::PI * u).sin() / (std::f64::consts::PI * u) };
                sinc * window
            })
            .collect();
        // one guard entry so interpolation at the edge reads a zero
        table.push(0.0);
        table
    })
}

fn kernel(u: f64) -> f64 {
    let u = u.abs() * TABLE_DENSITY as f64;
    let i = u as usize;
    let table = kernel_table();
    if i + 1 >= table.len() {
        return 0.0;
    }
    let frac = u - i as f64;
    table[i] + frac * (table[i + 1] - table[i])
}

/// Resamples by `ratio` = output rate / input rate, producing
/// `round(len * ratio)` samples. Returns the input unchanged when the
/// ratio is exactly one.
pub fn resample_by(samples: &[f64], ratio: f64) -> Vec<f64> {
    assert!(ratio > 0.0 && ratio.is_finite(), "resampling ratio must be positive");
    if ratio == 1.0 {
        return samples.to_vec();
    }
    let out_len = (samples.len() as f64 * ratio).round() as usize;
    let cutoff = ratio.min(1.0);
    let reach = ZERO_CROSSINGS as f64 / cutoff;
    let step = 1.0 / ratio;
    (0..out_len)
        .map(|n| {
            let t = n as f64 * step;
            let lo = (t - reach).ceil().max(0.0) as usize;
            let hi = ((t + reach).floor() as usize).min(samples.len().saturating_sub(1));
            if samples.is_empty() || lo > hi {
                return 0.0;
            }
            let acc: f64 = (lo..=hi).map(|k| samples[k] * kernel((t - k as f64) * cutoff)).sum();
            acc * cutoff
        })
        .collect()
}

/// Converts a clip to `target_rate`. Identity (bit-exact) at equal rates.
pub fn resample(clip: &AudioClip, target_rate: u32) -> AudioClip {
    assert!(target_rate > 0, "target rate must be positive");
    if target_rate == clip.sample_rate {
        return clip.clone();
    }
    let ratio = target_rate as f64 / clip.sample_rate as f64;
    let samples = resample_by(&clip.samples, ratio).into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
    AudioClip::new(samples, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft, WindowSpec};

    fn sine(freq: f64, rate: u32, len: usize, amp: f64) -> AudioClip {
        let samples = (0..len)
            .map(|i| amp * (std::f64::consts::TAU * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioClip::new(samples, rate)
    }

    #[test]
    fn bessel_matches_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-12);
        assert!((bessel_i0(8.6) / 750.461_159_563_165_9 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_rates_are_identity() {
        let clip = sine(440.0, 16_000, 1000, 0.3);
        assert_eq!(resample(&clip, 16_000), clip);
    }

    #[test]
    fn output_length_follows_ratio() {
        let clip = AudioClip::new(vec![0.0; 48_000], 48_000);
        assert_eq!(resample(&clip, 16_000).len(), 16_000);
        assert_eq!(resample(&AudioClip::new(vec![0.0; 1001], 8000), 16_000).len(), 2002);
    }

    #[test]
    fn upsampled_tone_keeps_its_frequency() {
        let up = resample(&sine(1000.0, 8000, 8000, 0.5), 16_000);
        let w = WindowSpec::default();
        let spec = stft(&up.samples, &w, up.sample_rate).unwrap();
        let mid = spec.n_frames / 2;
        let mags = spec.frame_magnitudes(mid);
        let peak = (0..mags.len()).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        assert!((peak as i64 - 32).abs() <= 1, "peak at bin {peak}");
    }

    #[test]
    fn downsampling_removes_content_above_new_nyquist() {
        // 10 kHz lies above the 8 kHz Nyquist of the target rate
        let clip = sine(10_000.0, 48_000, 48_000, 0.5);
        let down = resample(&clip, 16_000);
        let interior = &down.samples[2000..14_000];
        let rms = (interior.iter().map(|s| s * s).sum::<f64>() / interior.len() as f64).sqrt();
        assert!(rms < 1e-3, "aliased energy rms {rms}");
    }
}
