//! Corpus handling: audio clips, WAV I/O, manifests, speaker-disjoint
//! splitting and the synthetic test-corpus generator.

mod manifest;
mod split;
mod synth;
mod wav;

pub use manifest::{Category, DatasetManifest, ManifestEntry};
pub use split::split_by_speaker;
pub use synth::{generate_synthetic, synthetic_alphabet_labels, SynthCorpus, SynthSpec};
pub use wav::{read_wav, read_wav_file, write_wav, write_wav_file};

/// Nominal recording rate of the corpus.
pub const SAMPLE_RATE: u32 = 16_000;
/// Nominal clip duration in seconds.
pub const CLIP_SECONDS: f64 = 2.0;

/// A mono recording with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        debug_assert!(sample_rate > 0);
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}

/// Pads with trailing zeros or trims the tail so the clip lasts exactly
/// `round(target_seconds * sample_rate)` samples.
pub fn normalize_duration(clip: &AudioClip, target_seconds: f64) -> AudioClip {
    let target = (target_seconds * clip.sample_rate as f64).round() as usize;
    let mut samples = clip.samples.clone();
    samples.resize(target, 0.0);
    AudioClip::new(samples, clip.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pads_short_clips_with_zeros() {
        let clip = AudioClip::new(vec![0.25; 16_000], 16_000);
        let out = normalize_duration(&clip, 2.0);
        assert_eq!(out.len(), 32_000);
        assert!(out.samples[16_000..].iter().all(|&s| s == 0.0));
        assert!(out.samples[..16_000].iter().all(|&s| s == 0.25));
    }

    #[test]
    fn trims_long_clips_keeping_the_head() {
        let samples: Vec<f64> = (0..48_000).map(|i| (i as f64 / 48_000.0) - 0.5).collect();
        let clip = AudioClip::new(samples.clone(), 16_000);
        let out = normalize_duration(&clip, 2.0);
        assert_eq!(out.samples, samples[..32_000]);
    }

    #[test]
    fn exact_length_is_unchanged() {
        let clip = AudioClip::new((0..32_000).map(|i| (i % 7) as f64 / 10.0).collect(), 16_000);
        assert_eq!(normalize_duration(&clip, 2.0), clip);
    }

    #[test]
    fn normalization_is_idempotent() {
        for len in [0, 1, 31_999, 32_000, 40_000] {
            let clip = AudioClip::new(vec![0.1; len], 16_000);
            let once = normalize_duration(&clip, 2.0);
            assert_eq!(normalize_duration(&once, 2.0), once);
        }
    }
}
