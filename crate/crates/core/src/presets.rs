//! Built-in scenario files, optionally replaced by a directory of `.toml` files.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scenario;
use crate::simulation::ScenarioConfig;

/// Environment variable naming a directory that replaces the built-in presets.
pub const PRESET_DIR_ENV: &str = "ANTAGO_PRESET_DIR";

const BUILTIN: &[(&str, &str)] = &[
    ("constant-force", include_str!("../presets/constant-force.toml")),
    ("fig2-F1", include_str!("../presets/fig2-F1.toml")),
    ("fig2-F2", include_str!("../presets/fig2-F2.toml")),
    ("fig2-F3", include_str!("../presets/fig2-F3.toml")),
    ("setpoint-steps", include_str!("../presets/setpoint-steps.toml")),
];

/// Preset directory from [`PRESET_DIR_ENV`], if set and non-empty.
pub fn preset_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(PRESET_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Names of the available presets, sorted.
pub fn list_presets(dir: Option<&Path>) -> Result<Vec<String>> {
    let Some(dir) = dir else {
        return Ok(BUILTIN.iter().map(|(n, _)| n.to_string()).collect());
    };
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "toml") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Source text of preset `name`.
pub fn preset_text(name: &str, dir: Option<&Path>) -> Result<String> {
    match dir {
        None => BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| text.to_string())
            .ok_or_else(|| Error::UnknownPreset(name.to_string())),
        Some(dir) => {
            let valid = !name.is_empty() && !name.contains(['/', '\\']) && name != "." && name != "..";
            let path = dir.join(format!("{name}.toml"));
            if !valid || !path.is_file() {
                return Err(Error::UnknownPreset(name.to_string()));
            }
            Ok(std::fs::read_to_string(path)?)
        }
    }
}

pub fn load_preset(name: &str, dir: Option<&Path>) -> Result<ScenarioConfig> {
    let text = preset_text(name, dir)?;
    scenario::parse(&text).map_err(|e| match e {
        Error::Parse { line, key, message } => Error::Parse {
            line,
            key,
            message: format!("{message} (preset `{name}`)"),
        },
        other => other,
    })
}

/// Writes every preset into `dir` as `<name>.toml`, returning the paths.
pub fn export_presets(dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    BUILTIN
        .iter()
        .map(|(name, text)| {
            let path = dir.join(format!("{name}.toml"));
            std::fs::write(&path, text)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::PlantParams;
    use crate::simulation::ForceModel;

    #[test]
    fn builtin_presets_parse() {
        for name in list_presets(None).unwrap() {
            let s = load_preset(&name, None).unwrap();
            assert_eq!(s.params, PlantParams::prototype(), "{name}");
        }
        assert_eq!(load_preset("fig2-F3", None).unwrap().force, ForceModel::Spring(-10.0));
        assert_eq!(load_preset("setpoint-steps", None).unwrap().schedule.len(), 3);
        assert!(matches!(load_preset("fig9", None), Err(Error::UnknownPreset(_))));
    }
}
