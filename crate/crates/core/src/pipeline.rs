//! End-to-end data preparation over clips held in memory: speaker split,
//! training-side augmentation, preprocessing and feature extraction.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{apply_augmentation, augmented_entry, plan_augmentations, AugmentParams, AugmentPolicy};
use crate::dataset::{split_by_speaker, AudioClip, DatasetManifest, ManifestEntry};
use crate::dsp::{preprocess, PreprocessConfig, WindowSpec};
use crate::error::{Error, Result};
use crate::features::{extract, FeatureConfig, FeatureVector, MfccMatrix};
use crate::hierarchy::LabeledClip;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub window: WindowSpec,
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    pub augment: AugmentPolicy,
    /// Share of original recordings that go to the test side.
    pub test_fraction: f64,
    pub split_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window: WindowSpec::default(),
            preprocess: PreprocessConfig::default(),
            features: FeatureConfig::default(),
            augment: AugmentPolicy::default(),
            test_fraction: 0.2,
            split_seed: 0,
        }
    }
}

/// Preprocess then extract features from one raw clip.
pub fn featurize(clip: &AudioClip, cfg: &PipelineConfig) -> Result<(FeatureVector, MfccMatrix)> {
    let clean = preprocess(clip, &cfg.preprocess, &cfg.window)?;
    extract(&clean, &cfg.window, &cfg.features)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedClip {
    pub entry: ManifestEntry,
    pub vector: FeatureVector,
    pub mfcc: MfccMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSplit {
    /// Originals followed by their augmented copies.
    pub train: Vec<PreparedClip>,
    pub test: Vec<PreparedClip>,
}

impl PreparedSplit {
    pub fn labeled(side: &[PreparedClip]) -> Vec<LabeledClip<'_>> {
        side.iter().map(|c| (&c.mfcc, c.entry.label.as_str())).collect()
    }

    /// Feature vectors of the original (non-augmented) training clips, per
    /// class label.
    pub fn train_vectors_by_class(&self) -> BTreeMap<String, Vec<FeatureVector>> {
        let mut out: BTreeMap<String, Vec<FeatureVector>> = BTreeMap::new();
        for c in self.train.iter().filter(|c| !c.entry.is_augmented()) {
            out.entry(c.entry.label.clone()).or_default().push(c.vector.clone());
        }
        out
    }
}

/// One clip to featurize: an original, or an augmented copy of one.
#[derive(Debug, Clone, PartialEq)]
pub struct PrepJob {
    pub entry: ManifestEntry,
    pub augmentation: Option<AugmentParams>,
}

impl PrepJob {
    /// Path of the recording the job reads.
    pub fn source(&self) -> &str {
        self.entry.origin.as_deref().unwrap_or(&self.entry.path)
    }

    /// The clip to featurize, given the raw source recording.
    pub fn render(&self, raw: &AudioClip) -> Result<AudioClip> {
        match &self.augmentation {
            Some(a) => apply_augmentation(raw, a),
            None => Ok(raw.clone()),
        }
    }
}

/// Speaker-disjoint split of the original recordings of `m`, then the
/// augmentation plan of the training side. Returns every job (training
/// originals, their copies, then test entries) and the number of training
/// jobs.
pub fn plan_jobs(m: &DatasetManifest, cfg: &PipelineConfig) -> Result<(Vec<PrepJob>, usize)> {
    let originals = m.filter(|e| !e.is_augmented());
    let (train_m, test_m) = split_by_speaker(&originals, cfg.test_fraction, cfg.split_seed)?;
    cfg.augment.validate()?;
    let plan = plan_augmentations(&train_m, &cfg.augment);
    let plain = |e: &ManifestEntry| PrepJob { entry: e.clone(), augmentation: None };
    let mut jobs: Vec<PrepJob> = train_m.entries.iter().map(plain).collect();
    jobs.extend(plan.iter().map(|a| PrepJob { entry: augmented_entry(&train_m.entries[a.source], a.copy), augmentation: Some(*a) }));
    let n_train = jobs.len();
    jobs.extend(test_m.entries.iter().map(plain));
    Ok((jobs, n_train))
}

/// Speaker-disjoint split of `m` (whose entries are aligned with `clips`),
/// augmentation of the training side, then features for everything.
/// Augmentation acts on the raw clips, before preprocessing. Per-clip work
/// runs in parallel; results keep manifest order.
pub fn prepare_in_memory(m: &DatasetManifest, clips: &[AudioClip], cfg: &PipelineConfig) -> Result<PreparedSplit> {
    if m.len() != clips.len() {
        return Err(Error::DimensionMismatch { expected: m.len(), got: clips.len() });
    }
    let by_path: BTreeMap<&str, &AudioClip> = m.entries.iter().map(|e| e.path.as_str()).zip(clips).collect();
    let (jobs, n_train) = plan_jobs(m, cfg)?;
    let prepared = jobs
        .into_par_iter()
        .map(|job| {
            let raw = by_path.get(job.source()).ok_or_else(|| Error::UnknownLabel(job.source().to_string()))?;
            let (vector, mfcc) = featurize(&job.render(raw)?, cfg)?;
            Ok(PreparedClip { entry: job.entry, vector, mfcc })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut train = prepared;
    let test = train.split_off(n_train);
    Ok(PreparedSplit { train, test })
}
