//! `prepare`: split, augment and featurize a corpus, with a
//! content-addressed feature cache.
//!
//! Each clip's features are stored as a one-record ABJF file named by the
//! SHA-256 of the feature settings, the source WAV bytes and the
//! augmentation draw. A rerun with unchanged inputs reads every clip from
//! the cache.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use anyhow::{Context, Result};
use hkws_core::dataset::read_wav;
use hkws_core::features::{decode_feature_cache, encode_feature_cache, FeatureRecord};
use hkws_core::pipeline::{featurize, plan_jobs, PrepJob};
use hkws_core::{DatasetManifest, Error};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const TRAIN_FEATURES: &str = "train.abjf";
pub const TEST_FEATURES: &str = "test.abjf";
pub const TRAIN_MANIFEST: &str = "train_manifest.csv";
pub const TEST_MANIFEST: &str = "test_manifest.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrepareStats {
    pub train: usize,
    pub test: usize,
    pub augmented: usize,
    pub cache_hits: usize,
    pub computed: usize,
}

/// Hash of every setting that changes the features of a clip.
fn settings_digest(cfg: &RunConfig) -> Result<Vec<u8>> {
    #[derive(serde::Serialize)]
    struct Settings<'a> {
        window: &'a hkws_core::dsp::WindowSpec,
        preprocess: &'a hkws_core::dsp::PreprocessConfig,
        features: &'a hkws_core::features::FeatureConfig,
    }
    let p = &cfg.pipeline;
    let text = toml::to_string(&Settings { window: &p.window, preprocess: &p.preprocess, features: &p.features })?;
    Ok(Sha256::digest(text.as_bytes()).to_vec())
}

fn cache_key(settings: &[u8], wav: &[u8], job: &PrepJob) -> String {
    let mut h = Sha256::new();
    h.update(b"hkws-features-1");
    h.update(settings);
    h.update((wav.len() as u64).to_le_bytes());
    h.update(wav);
    match &job.augmentation {
        None => h.update([0u8]),
        Some(a) => {
            h.update([1u8]);
            h.update(a.semitones.to_le_bytes());
            h.update(a.cutoff.unwrap_or(0.0).to_le_bytes());
            h.update([a.cutoff.is_some() as u8]);
            h.update(a.gain_db.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn features_for(job: &PrepJob, cfg: &RunConfig, settings: &[u8], hits: &AtomicUsize) -> Result<FeatureRecord> {
    let source = cfg.paths.corpus_root.join(job.source());
    let wav = fs::read(&source).with_context(|| format!("reading {}", source.display()))?;
    let key = cache_key(settings, &wav, job);
    let cached = cfg.cache_dir().join(format!("{key}.abjf"));
    if let Ok(bytes) = fs::read(&cached) {
        if let Ok(mut records) = decode_feature_cache(&bytes) {
            if records.len() == 1 {
                hits.fetch_add(1, Ordering::Relaxed);
                let mut r = records.remove(0);
                r.path.clone_from(&job.entry.path);
                return Ok(r);
            }
        }
        log::warn!("ignoring unreadable cache entry {}", cached.display());
    }
    let clip = read_wav(&wav).with_context(|| format!("decoding {}", source.display()))?;
    let (vector, mfcc) = featurize(&job.render(&clip)?, &cfg.pipeline)?;
    let record = FeatureRecord { path: job.entry.path.clone(), vector, mfcc };
    // write then rename so that a concurrent or interrupted run never
    // leaves a truncated entry behind
    let tmp = cached.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, encode_feature_cache(std::slice::from_ref(&record)))?;
    fs::rename(&tmp, &cached)?;
    Ok(record)
}

pub fn prepare(cfg: &RunConfig) -> Result<PrepareStats> {
    let t0 = Instant::now();
    let manifest = crate::load_manifest(cfg.manifest_path())?;
    let (jobs, n_train) = plan_jobs(&manifest, &cfg.pipeline)?;
    fs::create_dir_all(cfg.cache_dir())?;
    fs::create_dir_all(&cfg.paths.work_dir)?;
    let settings = settings_digest(cfg)?;
    let hits = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let total = jobs.len();
    log::info!("preparing {total} clips ({n_train} train incl. augmented, {} test)", total - n_train);
    let records = jobs
        .par_iter()
        .map(|job| {
            let r = features_for(job, cfg, &settings, &hits);
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if n.is_multiple_of(500) || n == total {
                log::info!("{n}/{total} clips, {:.1}s", t0.elapsed().as_secs_f64());
            }
            r
        })
        .collect::<Result<Vec<_>>>()?;

    let (train_jobs, test_jobs) = jobs.split_at(n_train);
    let side_manifest = |js: &[PrepJob]| DatasetManifest::new(js.iter().map(|j| j.entry.clone()).collect());
    write_side(&cfg.paths.work_dir, TRAIN_MANIFEST, TRAIN_FEATURES, &side_manifest(train_jobs)?, &records[..n_train])?;
    write_side(&cfg.paths.work_dir, TEST_MANIFEST, TEST_FEATURES, &side_manifest(test_jobs)?, &records[n_train..])?;
    let cache_hits = hits.into_inner();
    let stats = PrepareStats {
        train: n_train,
        test: total - n_train,
        augmented: train_jobs.iter().filter(|j| j.augmentation.is_some()).count(),
        cache_hits,
        computed: total - cache_hits,
    };
    log::info!("prepare finished in {:.1}s: {stats:?}", t0.elapsed().as_secs_f64());
    Ok(stats)
}

fn write_side(dir: &Path, manifest_name: &str, features_name: &str, m: &DatasetManifest, records: &[FeatureRecord]) -> Result<()> {
    fs::write(dir.join(manifest_name), m.to_csv())?;
    fs::write(dir.join(features_name), encode_feature_cache(records))?;
    Ok(())
}

/// One side of a prepared corpus: entries aligned with their features.
pub struct Side {
    pub manifest: DatasetManifest,
    pub records: Vec<FeatureRecord>,
}

pub fn load_side(cfg: &RunConfig, train: bool) -> Result<Side> {
    let (m, f) = if train { (TRAIN_MANIFEST, TRAIN_FEATURES) } else { (TEST_MANIFEST, TEST_FEATURES) };
    let (mp, fp) = (cfg.work(m), cfg.work(f));
    if !mp.exists() || !fp.exists() {
        anyhow::bail!(crate::MissingArtifact { path: fp, producer: "prepare" });
    }
    let manifest = crate::load_manifest(&mp)?;
    let records = decode_feature_cache(&fs::read(&fp)?)?;
    if records.len() != manifest.len() || records.iter().zip(&manifest.entries).any(|(r, e)| r.path != e.path) {
        return Err(Error::Format { kind: "ABJF", reason: format!("{} does not match {}", fp.display(), mp.display()) }.into());
    }
    Ok(Side { manifest, records })
}

impl Side {
    /// `(mfcc, label)` pairs for the labels accepted by `keep`.
    pub fn labeled(&self, keep: impl Fn(&str) -> bool) -> Vec<(&hkws_core::MfccMatrix, &str)> {
        self.records
            .iter()
            .zip(&self.manifest.entries)
            .filter(|(_, e)| keep(&e.label))
            .map(|(r, e)| (&r.mfcc, e.label.as_str()))
            .collect()
    }
}
