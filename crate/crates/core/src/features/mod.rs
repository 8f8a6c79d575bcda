//! Frame-level descriptors, MFCCs and their clip-level aggregation.

mod aggregate;
mod cache;
mod frame;
mod mfcc;

pub use aggregate::{aggregate_mean, aggregate_stats, describe, Aggregation, FeatureVector, BASE_FEATURES, STATS};
pub use cache::{decode_feature_cache, encode_feature_cache, FeatureRecord, CACHE_MAGIC, CACHE_VERSION};
pub use frame::{spectral_features, ste, zcr, FrameFeatures};
pub use mfcc::{hz_to_mel, log_mel_energies, mel_to_hz, mfcc, mfcc_from_log_mel, MelFilterbank, MfccMatrix};

use serde::{Deserialize, Serialize};

use crate::dataset::AudioClip;
use crate::dsp::{frame_signal, stft, WindowSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub mel_fmin: f64,
    pub mel_fmax: f64,
    pub rolloff_pct: f64,
    pub log_floor: f64,
    pub aggregation: Aggregation,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_mels: 40,
            n_mfcc: 13,
            mel_fmin: 0.0,
            mel_fmax: 8000.0,
            rolloff_pct: 0.85,
            log_floor: 1e-10,
            aggregation: Aggregation::Mean,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if self.n_mfcc == 0
            || self.n_mfcc > self.n_mels
            || self.mel_fmin < 0.0
            || self.mel_fmin >= self.mel_fmax
            || self.mel_fmax > nyquist
            || !(0.0..=1.0).contains(&self.rolloff_pct)
            || self.log_floor <= 0.0
        {
            return Err(Error::InvalidConfig(format!("feature configuration out of range: {self:?}")));
        }
        Ok(())
    }
}

/// Frame features and MFCCs of an already preprocessed clip, plus the
/// aggregated clip vector.
pub fn extract(clip: &AudioClip, w: &WindowSpec, cfg: &FeatureConfig) -> Result<(FeatureVector, MfccMatrix)> {
    cfg.validate(clip.sample_rate)?;
    let frames = frame_signal(&clip.samples, w)?;
    let spec = stft(&clip.samples, w, clip.sample_rate)?;
    let freqs = spec.bin_freqs();
    let mut prev: Option<Vec<f64>> = None;
    let mut per_frame = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let mags = spec.frame_magnitudes(t);
        let (centroid, entropy, flux, rolloff) = spectral_features(prev.as_deref(), &mags, &freqs, cfg.rolloff_pct)?;
        per_frame.push(FrameFeatures { zcr: zcr(frame)?, ste: ste(frame)?, centroid, entropy, flux, rolloff });
        prev = Some(mags);
    }
    let coeffs = mfcc(&spec, cfg);
    let vector = match cfg.aggregation {
        Aggregation::Mean => aggregate_mean(&per_frame, &coeffs)?,
        Aggregation::Stats => aggregate_stats(&per_frame, &coeffs)?,
    };
    Ok((vector, coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone() -> AudioClip {
        AudioClip::new((0..32_000).map(|i| 0.3 * (std::f64::consts::TAU * 700.0 * i as f64 / 16_000.0).sin()).collect(), 16_000)
    }

    #[test]
    fn two_second_clip_shapes() {
        let w = WindowSpec::default();
        let (v, m) = extract(&tone(), &w, &FeatureConfig::default()).unwrap();
        assert_eq!((m.n_frames, m.n_coeffs), (198, 13));
        assert_eq!(v.len(), 19);
        let stats = FeatureConfig { aggregation: Aggregation::Stats, ..Default::default() };
        assert_eq!(extract(&tone(), &w, &stats).unwrap().0.len(), 114);
    }

    #[test]
    fn extraction_is_deterministic() {
        let w = WindowSpec::default();
        assert_eq!(extract(&tone(), &w, &FeatureConfig::default()).unwrap(), extract(&tone(), &w, &FeatureConfig::default()).unwrap());
    }

    #[test]
    fn tone_centroid_is_near_its_bin() {
        let (v, _) = extract(&tone(), &WindowSpec::default(), &FeatureConfig::default()).unwrap();
        assert!((v.values[2] - 700.0).abs() <= 31.25, "centroid {}", v.values[2]);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = FeatureConfig { n_mfcc: 41, ..Default::default() };
        assert!(extract(&tone(), &WindowSpec::default(), &bad).is_err());
        let bad = FeatureConfig { mel_fmax: 9000.0, ..Default::default() };
        assert!(bad.validate(16_000).is_err());
    }
}
