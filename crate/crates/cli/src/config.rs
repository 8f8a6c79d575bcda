//! Run configuration, read from a TOML file.
//!
//! Every section is optional; omitted keys take their defaults. Relative
//! paths are resolved against the directory holding the config file (or
//! the working directory when no file is given).
//!
//! ```toml
//! [paths]
//! corpus_root = "corpus"        # WAV files, addressed by manifest paths
//! manifest = "corpus/manifest.csv"
//! work_dir = "run"              # prepared features, group map, reports
//! cache_dir = "run/cache"       # content-addressed feature cache
//! model_dir = "run/models"      # ABJD bundles
//! group_table = "table.tsv"     # optional articulation table
//!
//! [pipeline]                    # window, preprocess, features, augment,
//! test_fraction = 0.2           # test_fraction, split_seed
//! split_seed = 0
//!
//! [train]                       # learning_rate, batch_size, epochs, seed, beta1, beta2, epsilon
//! epochs = 30
//!
//! [models]
//! stage1 = "static-best"
//! stage2 = "static-best"
//! flat = "static-best"
//! preset_file = "my-presets.toml"   # optional extra presets
//! [models.per_group]
//! Halq = "halq-best"
//!
//! [grouping]
//! k_min = 2
//! k_max = 10
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hkws_core::hierarchy::StageConfigs;
use hkws_core::neural::presets::{builtin_presets, parse_presets, Preset};
use hkws_core::pipeline::PipelineConfig;
use hkws_core::{Error, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus_root: PathBuf,
    pub manifest: Option<PathBuf>,
    pub work_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub group_table: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus_root: "corpus".into(),
            manifest: None,
            work_dir: "run".into(),
            cache_dir: None,
            model_dir: None,
            group_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Models {
    pub stage1: String,
    pub stage2: String,
    pub flat: String,
    pub per_group: BTreeMap<String, String>,
    pub preset_file: Option<PathBuf>,
}

impl Default for Models {
    fn default() -> Self {
        let best = "static-best".to_string();
        Self { stage1: best.clone(), stage2: best.clone(), flat: best, per_group: BTreeMap::new(), preset_file: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grouping {
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for Grouping {
    fn default() -> Self {
        Self { k_min: 2, k_max: 10 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub models: Models,
    pub grouping: Grouping,
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Reads `path` (or the defaults), applies the overrides and resolves
    /// relative paths.
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let (mut cfg, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?;
                (cfg, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (RunConfig::default(), PathBuf::new()),
        };
        if let Some(seed) = o.seed {
            cfg.pipeline.split_seed = seed;
            cfg.pipeline.augment.seed = seed;
            cfg.train.seed = seed;
        }
        if let Some(p) = &o.preset {
            cfg.models.stage1.clone_from(p);
            cfg.models.stage2.clone_from(p);
            cfg.models.flat.clone_from(p);
            cfg.models.per_group.clear();
        }
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let paths = &mut cfg.paths;
        paths.corpus_root = resolve(&paths.corpus_root);
        paths.work_dir = match &o.out {
            Some(out) => out.clone(),
            None => resolve(&paths.work_dir),
        };
        paths.manifest = Some(paths.manifest.as_deref().map_or_else(|| paths.corpus_root.join("manifest.csv"), resolve));
        paths.cache_dir = Some(paths.cache_dir.as_deref().map_or_else(|| paths.work_dir.join("cache"), resolve));
        paths.model_dir = Some(paths.model_dir.as_deref().map_or_else(|| paths.work_dir.join("models"), resolve));
        paths.group_table = paths.group_table.as_deref().map(resolve);
        cfg.models.preset_file = cfg.models.preset_file.as_deref().map(resolve);
        cfg.train.validate()?;
        cfg.pipeline.augment.validate()?;
        cfg.pipeline.window.validate()?;
        // unknown or malformed presets are configuration errors, reported
        // before any work starts
        cfg.model(&cfg.models.stage1)?;
        cfg.model(&cfg.models.flat)?;
        cfg.stage2_configs()?;
        Ok(cfg)
    }

    pub fn manifest_path(&self) -> &Path {
        self.paths.manifest.as_deref().expect("resolved in load")
    }

    pub fn cache_dir(&self) -> &Path {
        self.paths.cache_dir.as_deref().expect("resolved in load")
    }

    pub fn model_dir(&self) -> &Path {
        self.paths.model_dir.as_deref().expect("resolved in load")
    }

    pub fn work(&self, name: &str) -> PathBuf {
        self.paths.work_dir.join(name)
    }

    /// Built-in presets plus those of `models.preset_file`; names must be
    /// unique across both.
    pub fn presets(&self) -> Result<Vec<Preset>> {
        let mut all = builtin_presets();
        if let Some(file) = &self.models.preset_file {
            let text = std::fs::read_to_string(file).with_context(|| format!("reading presets {}", file.display()))?;
            for p in parse_presets(&text)? {
                if all.iter().any(|q| q.name == p.name) {
                    return Err(Error::InvalidConfig(format!("preset `{}` is already defined", p.name)).into());
                }
                all.push(p);
            }
        }
        Ok(all)
    }

    pub fn model(&self, name: &str) -> Result<ModelConfig> {
        let found = self.presets()?.into_iter().find(|p| p.name == name).ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
        found.model.clone().with_classes(2).validate()?;
        Ok(found.model)
    }

    pub fn stage2_configs(&self) -> Result<StageConfigs> {
        let mut cfgs = StageConfigs::shared(self.model(&self.models.stage2)?);
        for (group, name) in &self.models.per_group {
            cfgs.per_group.insert(group.clone(), self.model(name)?);
        }
        Ok(cfgs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[paths]\ncorpus = 'x'\n").is_err());
    }

    #[test]
    fn overrides_apply() {
        let o = Overrides { seed: Some(9), preset: Some("synthetic".into()), out: Some("elsewhere".into()) };
        let cfg = RunConfig::load(None, &o).unwrap();
        assert_eq!((cfg.train.seed, cfg.pipeline.split_seed, cfg.pipeline.augment.seed), (9, 9, 9));
        assert_eq!(cfg.models.stage2, "synthetic");
        assert_eq!(cfg.model_dir(), Path::new("elsewhere/models"));
        assert_eq!(cfg.manifest_path(), Path::new("corpus/manifest.csv"));
        assert!(cfg.model("synthetic").is_ok());
        assert!(cfg.model("no-such").is_err());
    }
}
