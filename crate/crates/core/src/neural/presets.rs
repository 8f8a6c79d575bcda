//! Named model architectures shipped as data.

use serde::Deserialize;

use super::model::ModelConfig;
use crate::error::{Error, Result};

const PRESETS_TOML: &str = include_str!("presets.toml");

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Preset {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(flatten)]
    pub model: ModelConfig,
}

#[derive(Deserialize)]
struct PresetFile {
    preset: Vec<Preset>,
}

/// Parses a preset file; names must be unique.
pub fn parse_presets(text: &str) -> Result<Vec<Preset>> {
    let file: PresetFile = toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("presets: {e}")))?;
    let mut seen = std::collections::BTreeSet::new();
    for p in &file.preset {
        if !seen.insert(p.name.as_str()) {
            return Err(Error::InvalidConfig(format!("duplicate preset `{}`", p.name)));
        }
    }
    Ok(file.preset)
}

/// The built-in presets.
pub fn builtin_presets() -> Vec<Preset> {
    parse_presets(PRESETS_TOML).expect("built-in presets parse")
}

pub fn preset(name: &str) -> Result<ModelConfig> {
    builtin_presets().into_iter().find(|p| p.name == name).map(|p| p.model).ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::Layout;

    #[test]
    fn every_preset_instantiates_on_two_second_clips() {
        let all = builtin_presets();
        assert_eq!(all.len(), 26);
        for p in all {
            let cfg = p.model.clone().with_classes(6);
            Layout::new(&cfg, 198, 13).unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
    }

    #[test]
    fn lookup() {
        let halq = preset("halq-best").unwrap();
        assert_eq!(halq.dense_units, vec![512, 64]);
        assert!(halq.lstm_units.is_empty());
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
        let dup = "[[preset]]\nname = \"a\"\ndense_units=[1]\n[[preset]]\nname = \"a\"\ndense_units=[1]\n";
        assert!(parse_presets(dup).is_err());
    }
}
