//! Deterministic synthetic corpus: every class is a pair of enveloped sine
//! "formants". Classes of one planted group share the first formant and
//! differ in the second; each speaker scales both by a fixed pitch factor.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{normalize_duration, wav, write_wav_file, AudioClip, Category, DatasetManifest, ManifestEntry, CLIP_SECONDS, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::rng;

/// First-formant band shared out among the planted groups, Hz.
const F1_BAND: (f64, f64) = (300.0, 1000.0);
/// Second-formant band shared out among the classes of a group, Hz.
const F2_BAND: (f64, f64) = (1300.0, 3000.0);
const F1_AMPLITUDE: f64 = 0.5;
const F2_AMPLITUDE: f64 = 0.2;
const RAMP_SECONDS: f64 = 0.06;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub n_groups: usize,
    pub speakers: usize,
    pub samples_per_class: usize,
    pub seed: u64,
    /// RMS amplitude of the additive white noise, stored in thousandths so
    /// `SynthSpec` stays `Eq`.
    pub noise_milli: u32,
}

impl SynthSpec {
    pub fn noise_level(&self) -> f64 {
        self.noise_milli as f64 / 1000.0
    }

    fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.n_classes < self.n_groups || self.speakers == 0 || self.samples_per_class == 0 {
            return Err(Error::InvalidConfig(format!(
                "synthetic spec needs classes >= groups >= 1 and positive counts, got {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { n_classes: 12, n_groups: 4, speakers: 40, samples_per_class: 50, seed: 7, noise_milli: 10 }
    }
}

/// A generated corpus held in memory.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub manifest: DatasetManifest,
    /// One clip per manifest entry, already quantized to 16 bits.
    pub clips: Vec<AudioClip>,
    /// Class labels in class-id order.
    pub labels: Vec<String>,
    /// Planted group of each class, in class-id order.
    pub class_group: Vec<usize>,
    /// `(f1, f2)` in Hz of each class, in class-id order.
    pub formants: Vec<(f64, f64)>,
}

impl SynthCorpus {
    /// Writes the WAV files and `manifest.csv` under `root`.
    pub fn write_to(&self, root: &Path) -> Result<()> {
        for (entry, clip) in self.manifest.entries.iter().zip(&self.clips) {
            let path = root.join(&entry.path);
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            write_wav_file(&path, clip)?;
        }
        fs::write(root.join("manifest.csv"), self.manifest.to_csv())?;
        Ok(())
    }

    /// Planted `(label, group)` pairs.
    pub fn planted_groups(&self) -> Vec<(String, usize)> {
        self.labels.iter().cloned().zip(self.class_group.iter().copied()).collect()
    }
}

fn log_grid(band: (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(band.0 * band.1).sqrt()];
    }
    let ratio = (band.1 / band.0).powf(1.0 / (n - 1) as f64);
    (0..n).map(|i| band.0 * ratio.powi(i as i32)).collect()
}

fn group_of(class: usize, spec: &SynthSpec) -> usize {
    class * spec.n_groups / spec.n_classes
}

fn formant_table(spec: &SynthSpec) -> Vec<(f64, f64)> {
    let mut table_rng = rng::stream(spec.seed, &[0xf0]);
    let mut f1_slots: Vec<f64> = log_grid(F1_BAND, spec.n_groups);
    f1_slots.shuffle(&mut table_rng);
    for f1 in &mut f1_slots {
        *f1 *= 1.0 + table_rng.random_range(-0.02..0.02);
    }
    let max_members = (0..spec.n_groups)
        .map(|g| (0..spec.n_classes).filter(|&c| group_of(c, spec) == g).count())
        .max()
        .unwrap_or(1);
    let f2_grid = log_grid(F2_BAND, max_members);

    let mut table = Vec::with_capacity(spec.n_classes);
    let mut f2_perm: Vec<usize> = Vec::new();
    let mut member = 0;
    for c in 0..spec.n_classes {
        let g = group_of(c, spec);
        if c == 0 || group_of(c - 1, spec) != g {
            f2_perm = (0..max_members).collect();
            f2_perm.shuffle(&mut table_rng);
            member = 0;
        }
        let f1 = f1_slots[g];
        let f2 = f2_grid[f2_perm[member]] * (1.0 + table_rng.random_range(-0.02..0.02));
        table.push((f1, f2));
        member += 1;
    }
    table
}

fn render(formants: (f64, f64), pitch: f64, noise: f64, rng: &mut impl Rng) -> Vec<f64> {
    let rate = SAMPLE_RATE as f64;
    let n = (CLIP_SECONDS * rate) as usize;
    let onset = rng.random_range(0.15..0.35);
    let duration = rng.random_range(0.9..1.3);
    let gain = rng.random_range(0.6..1.0);
    let wobble = 1.0 + rng.random_range(-0.01..0.01);
    let (f1, f2) = (formants.0 * pitch * wobble, formants.1 * pitch * wobble);
    let (p1, p2) = (rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU));
    let gaussian = Normal::new(0.0, noise.max(0.0)).expect("finite std");

    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let local = t - onset;
            let env = if local < 0.0 || local > duration {
                0.0
            } else {
                let edge = local.min(duration - local);
                if edge >= RAMP_SECONDS {
                    1.0
                } else {
                    0.5 - 0.5 * (std::f64::consts::PI * edge / RAMP_SECONDS).cos()
                }
            };
            let tone = F1_AMPLITUDE * (std::f64::consts::TAU * f1 * t + p1).sin()
                + F2_AMPLITUDE * (std::f64::consts::TAU * f2 * t + p2).sin();
            let s = gain * env * tone + gaussian.sample(rng);
            wav::quantize(s.clamp(-1.0, 1.0)) as f64 / 32768.0
        })
        .collect()
}

/// Builds the synthetic corpus described by `spec`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let formants = formant_table(spec);
    let pitch: Vec<f64> = (0..spec.speakers)
        .map(|s| rng::stream(spec.seed, &[0x5e, s as u64]).random_range(0.9..=1.1))
        .collect();
    let ages: Vec<u8> = (0..spec.speakers)
        .map(|s| rng::stream(spec.seed, &[0xa9, s as u64]).random_range(3..=12))
        .collect();
    let width = format!("{}", spec.n_classes.saturating_sub(1)).len().max(2);
    let labels: Vec<String> = (0..spec.n_classes).map(|c| format!("syn{c:0width$}")).collect();

    let mut entries = Vec::with_capacity(spec.n_classes * spec.samples_per_class);
    let mut clips = Vec::with_capacity(entries.capacity());
    for (c, label) in labels.iter().enumerate() {
        for j in 0..spec.samples_per_class {
            let speaker = j % spec.speakers;
            let mut clip_rng = rng::stream(spec.seed, &[0xc1, c as u64, j as u64]);
            let samples = render(formants[c], pitch[speaker], spec.noise_level(), &mut clip_rng);
            clips.push(normalize_duration(&AudioClip::new(samples, SAMPLE_RATE), CLIP_SECONDS));
            entries.push(ManifestEntry {
                path: format!("{label}/spk{speaker:03}_{j:04}.wav"),
                label: label.clone(),
                category: Category::Alphabet,
                speaker_id: format!("spk{speaker:03}"),
                age_years: Some(ages[speaker]),
                origin: None,
            });
        }
    }
    let manifest = DatasetManifest::new(entries)?;
    let class_group = (0..spec.n_classes).map(|c| group_of(c, spec)).collect();
    Ok(SynthCorpus { spec: *spec, manifest, clips, labels, class_group, formants })
}

/// The 112 alphabet labels in the corpus naming convention: each of the 28
/// letters on its own, plus three words per letter written `word (letter)`.
pub fn synthetic_alphabet_labels() -> Vec<String> {
    crate::grouping::ARABIC_LETTERS
        .iter()
        .flat_map(|l| {
            let letter = l.to_string();
            std::iter::once(letter.clone()).chain((1..=3).map(move |i| format!("{letter}{i} ({letter})")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec { n_classes: 6, n_groups: 2, speakers: 4, samples_per_class: 3, seed: 1, noise_milli: 10 }
    }

    #[test]
    fn counts_rows() {
        let spec = SynthSpec { samples_per_class: 50, speakers: 5, ..SynthSpec::default() };
        let corpus = generate_synthetic(&spec).unwrap();
        assert_eq!(corpus.manifest.len(), 600);
        assert_eq!(corpus.manifest.n_classes(), 12);
        assert!(corpus.clips.iter().all(|c| c.len() == 32_000 && c.sample_rate == 16_000));
    }

    #[test]
    fn deterministic_bytes() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a.manifest, b.manifest);
        for (x, y) in a.clips.iter().zip(&b.clips) {
            assert_eq!(crate::dataset::write_wav(x), crate::dataset::write_wav(y));
        }
        let other = generate_synthetic(&SynthSpec { seed: 2, ..small() }).unwrap();
        assert_ne!(a.clips[0], other.clips[0]);
    }

    #[test]
    fn formant_pairs_are_separated() {
        let corpus = generate_synthetic(&SynthSpec { samples_per_class: 1, ..SynthSpec::default() }).unwrap();
        let f = &corpus.formants;
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                // log-frequency distance: at least ~30% apart on one formant
                let d = (f[i].0 / f[j].0).ln().abs().max((f[i].1 / f[j].1).ln().abs());
                assert!(d >= 0.26, "classes {i},{j}: {:?} vs {:?}", f[i], f[j]);
                if corpus.class_group[i] == corpus.class_group[j] {
                    assert_eq!(f[i].0, f[j].0);
                }
            }
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(generate_synthetic(&SynthSpec { n_groups: 7, ..small() }).is_err());
        assert!(generate_synthetic(&SynthSpec { speakers: 0, ..small() }).is_err());
    }

    #[test]
    fn alphabet_labels_cover_112_classes() {
        let labels = synthetic_alphabet_labels();
        assert_eq!(labels.len(), 112);
        assert_eq!(labels.iter().collect::<std::collections::BTreeSet<_>>().len(), 112);
    }
}
