//! Training-set augmentation: pitch shift, low-pass filtering and gain.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{normalize_duration, read_wav_file, write_wav_file, AudioClip, DatasetManifest, ManifestEntry};
use crate::dsp::resample_by;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub copies_per_sample: usize,
    pub pitch_semitones: Vec<f64>,
    /// Inclusive cutoff range in Hz.
    pub lowpass_range: (f64, f64),
    pub lowpass_prob: f64,
    pub gain_db_range: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            copies_per_sample: 3,
            pitch_semitones: vec![-2.0, -1.0, 1.0, 2.0],
            lowpass_range: (2000.0, 7000.0),
            lowpass_prob: 0.5,
            gain_db_range: (-6.0, 6.0),
            seed: 0,
        }
    }
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<()> {
        let ok = !self.pitch_semitones.is_empty()
            && self.pitch_semitones.iter().all(|s| s.abs() <= 12.0)
            && self.lowpass_range.0 > 0.0
            && self.lowpass_range.0 <= self.lowpass_range.1
            && (0.0..=1.0).contains(&self.lowpass_prob)
            && self.gain_db_range.0 <= self.gain_db_range.1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("augmentation policy out of range: {self:?}")))
        }
    }
}

/// Scales by `10^(db/20)` and hard-clips to `[-1, 1]`.
pub fn gain(clip: &AudioClip, db: f64) -> AudioClip {
    if db == 0.0 {
        return clip.clone();
    }
    let g = 10f64.powf(db / 20.0);
    AudioClip::new(clip.samples.iter().map(|s| (s * g).clamp(-1.0, 1.0)).collect(), clip.sample_rate)
}

/// Second-order Butterworth low-pass (bilinear transform), one forward pass.
pub fn low_pass(clip: &AudioClip, cutoff: f64) -> Result<AudioClip> {
    let nyquist = clip.sample_rate as f64 / 2.0;
    if !(cutoff > 0.0 && cutoff < nyquist) {
        return Err(Error::CutoffOutOfRange { cutoff, nyquist });
    }
    let w0 = std::f64::consts::TAU * cutoff / clip.sample_rate as f64;
    let (sin, cos) = w0.sin_cos();
    let alpha = sin / std::f64::consts::SQRT_2;
    let a0 = 1.0 + alpha;
    let b0 = (1.0 - cos) / 2.0 / a0;
    let b1 = (1.0 - cos) / a0;
    let b2 = b0;
    let a1 = -2.0 * cos / a0;
    let a2 = (1.0 - alpha) / a0;

    let (mut z1, mut z2) = (0.0, 0.0);
    let samples = clip
        .samples
        .iter()
        .map(|&x| {
            let y = b0 * x + z1;
            z1 = b1 * x - a1 * y + z2;
            z2 = b2 * x - a2 * y;
            y.clamp(-1.0, 1.0)
        })
        .collect();
    Ok(AudioClip::new(samples, clip.sample_rate))
}

/// Shifts pitch by resampling with factor `2^(-semitones/12)` and playing
/// the result back at the original rate. Tempo changes with pitch; the
/// output is padded or trimmed to the input length.
pub fn pitch_shift(clip: &AudioClip, semitones: f64) -> AudioClip {
    assert!(semitones.abs() <= 12.0, "pitch shift limited to one octave");
    let ratio = 2f64.powf(-semitones / 12.0);
    let shifted = AudioClip::new(
        resample_by(&clip.samples, ratio).into_iter().map(|s| s.clamp(-1.0, 1.0)).collect(),
        clip.sample_rate,
    );
    normalize_duration(&shifted, clip.duration_seconds())
}

/// Random draws for one augmented copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    /// Index of the source entry in the manifest.
    pub source: usize,
    pub copy: usize,
    pub semitones: f64,
    pub cutoff: Option<f64>,
    pub gain_db: f64,
}

/// Draws every augmentation parameter from one seeded stream, in manifest
/// order. Augmented entries of the input are skipped.
pub fn plan_augmentations(m: &DatasetManifest, p: &AugmentPolicy) -> Vec<AugmentParams> {
    let mut stream = rng::stream(p.seed, &[0xa4]);
    let mut plan = Vec::new();
    for (source, entry) in m.entries.iter().enumerate() {
        if entry.is_augmented() {
            continue;
        }
        for copy in 0..p.copies_per_sample {
            let semitones = p.pitch_semitones[stream.random_range(0..p.pitch_semitones.len())];
            let apply_lowpass = stream.random::<f64>() < p.lowpass_prob;
            let cutoff_draw = stream.random_range(p.lowpass_range.0..=p.lowpass_range.1);
            let gain_db = stream.random_range(p.gain_db_range.0..=p.gain_db_range.1);
            plan.push(AugmentParams { source, copy, semitones, cutoff: apply_lowpass.then_some(cutoff_draw), gain_db });
        }
    }
    plan
}

/// Pitch shift, optional low-pass, then gain.
pub fn apply_augmentation(clip: &AudioClip, a: &AugmentParams) -> Result<AudioClip> {
    let mut out = pitch_shift(clip, a.semitones);
    if let Some(cutoff) = a.cutoff {
        let nyquist = out.sample_rate as f64 / 2.0;
        out = low_pass(&out, cutoff.min(nyquist * 0.99))?;
    }
    Ok(gain(&out, a.gain_db))
}

/// Relative path of an augmented copy.
pub fn augmented_path(source: &str, copy: usize) -> String {
    let stem = source.strip_suffix(".wav").unwrap_or(source);
    format!("aug/{stem}_aug{copy}.wav")
}

/// Manifest entry of an augmented copy; it inherits label, speaker and
/// category from its source.
pub fn augmented_entry(source: &ManifestEntry, copy: usize) -> ManifestEntry {
    ManifestEntry { path: augmented_path(&source.path, copy), origin: Some(source.path.clone()), ..source.clone() }
}

/// Writes `copies_per_sample` augmented copies of every original entry
/// under `out_root` (originals are read from `corpus_root`) and returns the
/// manifest of originals plus copies.
pub fn augment_dataset(m: &DatasetManifest, corpus_root: &Path, out_root: &Path, p: &AugmentPolicy) -> Result<DatasetManifest> {
    p.validate()?;
    let plan = plan_augmentations(m, p);
    plan.par_iter().try_for_each(|a| -> Result<()> {
        let source = &m.entries[a.source];
        let clip = read_wav_file(corpus_root.join(&source.path))?;
        let out = apply_augmentation(&clip, a)?;
        let path = out_root.join(augmented_path(&source.path, a.copy));
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        write_wav_file(path, &out)
    })?;
    let mut entries = m.entries.clone();
    entries.extend(plan.iter().map(|a| augmented_entry(&m.entries[a.source], a.copy)));
    DatasetManifest::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Category;
    use crate::dsp::{stft, WindowSpec};

    fn sine(freq: f64, amp: f64) -> AudioClip {
        AudioClip::new((0..32_000).map(|i| amp * (std::f64::consts::TAU * freq * i as f64 / 16_000.0).sin()).collect(), 16_000)
    }

    fn peak(clip: &AudioClip) -> (usize, f64) {
        let spec = stft(&clip.samples, &WindowSpec::default(), clip.sample_rate).unwrap();
        let mags = spec.frame_magnitudes(spec.n_frames / 2);
        let k = (0..mags.len()).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        (k, mags[k])
    }

    #[test]
    fn zero_gain_is_identity() {
        let c = sine(300.0, 0.4);
        assert_eq!(gain(&c, 0.0), c);
    }

    #[test]
    fn gain_doubles_rms_and_clips() {
        let c = sine(300.0, 0.4);
        let db = 20.0 * 2f64.log10();
        assert!((gain(&c, db).rms() / c.rms() - 2.0).abs() < 1e-12);
        let loud = AudioClip::new(vec![0.9, -0.9], 16_000);
        assert_eq!(gain(&loud, 6.02).samples, vec![1.0, -1.0]);
    }

    #[test]
    fn low_pass_passes_low_tones_and_dc() {
        let c = sine(100.0, 0.5);
        let out = low_pass(&c, 4000.0).unwrap();
        let ratio = peak(&out).1 / peak(&c).1;
        assert!((20.0 * ratio.log10()).abs() < 1.0);
        let dc = low_pass(&AudioClip::new(vec![0.3; 4000], 16_000), 1000.0).unwrap();
        assert!((dc.samples[3999] / 0.3 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn low_pass_attenuates_two_octaves_up() {
        let c = sine(4000.0, 0.5);
        let out = low_pass(&c, 1000.0).unwrap();
        let db = 20.0 * (peak(&out).1 / peak(&c).1).log10();
        assert!(db <= -20.0, "attenuation {db} dB");
    }

    #[test]
    fn low_pass_rejects_bad_cutoffs() {
        let c = sine(100.0, 0.5);
        assert!(low_pass(&c, 0.0).is_err());
        assert!(low_pass(&c, 8000.0).is_err());
    }

    #[test]
    fn octave_shift_doubles_frequency() {
        let out = pitch_shift(&sine(440.0, 0.5), 12.0);
        assert_eq!(out.len(), 32_000);
        let spec = stft(&out.samples, &WindowSpec::default(), 16_000).unwrap();
        let mags = spec.frame_magnitudes(20);
        let k = (0..mags.len()).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        assert!((k as f64 * 31.25 / 880.0 - 1.0).abs() < 0.02, "peak bin {k}");
    }

    #[test]
    fn zero_shift_and_length() {
        let c = sine(440.0, 0.5);
        assert_eq!(pitch_shift(&c, 0.0), c);
        assert_eq!(pitch_shift(&c, -2.0).len(), 32_000);
        assert_eq!(pitch_shift(&c, 7.0).len(), 32_000);
    }

    fn manifest(n: usize) -> DatasetManifest {
        DatasetManifest::new(
            (0..n)
                .map(|i| ManifestEntry {
                    path: format!("c{}/{i}.wav", i % 4),
                    label: format!("c{}", i % 4),
                    category: Category::Color,
                    speaker_id: format!("s{}", i % 5),
                    age_years: None,
                    origin: None,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn plan_is_seeded_and_counts_copies() {
        let m = manifest(100);
        let p = AugmentPolicy { seed: 4, ..Default::default() };
        let plan = plan_augmentations(&m, &p);
        assert_eq!(plan.len(), 300);
        assert_eq!(plan, plan_augmentations(&m, &p));
        assert_ne!(plan, plan_augmentations(&m, &AugmentPolicy { seed: 5, ..Default::default() }));
        assert!(plan.iter().all(|a| p.pitch_semitones.contains(&a.semitones)));
        assert!(plan.iter().all(|a| (-6.0..=6.0).contains(&a.gain_db)));
        assert!(plan.iter().filter_map(|a| a.cutoff).all(|c| (2000.0..=7000.0).contains(&c)));
        let lowpassed = plan.iter().filter(|a| a.cutoff.is_some()).count();
        assert!((100..200).contains(&lowpassed));
    }

    #[test]
    fn dataset_expansion_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(8);
        for e in &m.entries {
            let path = dir.path().join(&e.path);
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            write_wav_file(&path, &sine(500.0, 0.3)).unwrap();
        }
        let p = AugmentPolicy { seed: 1, ..Default::default() };
        let out = augment_dataset(&m, dir.path(), dir.path(), &p).unwrap();
        assert_eq!(out.len(), 32);
        for e in out.entries.iter().filter(|e| e.is_augmented()) {
            let src = m.entries.iter().find(|s| Some(&s.path) == e.origin.as_ref()).unwrap();
            assert_eq!((&e.label, &e.speaker_id, e.category), (&src.label, &src.speaker_id, src.category));
            assert!(dir.path().join(&e.path).exists());
        }
        let first: Vec<Vec<u8>> = out.entries[8..].iter().map(|e| fs::read(dir.path().join(&e.path)).unwrap()).collect();
        augment_dataset(&m, dir.path(), dir.path(), &p).unwrap();
        let second: Vec<Vec<u8>> = out.entries[8..].iter().map(|e| fs::read(dir.path().join(&e.path)).unwrap()).collect();
        assert_eq!(first, second);
    }
}
