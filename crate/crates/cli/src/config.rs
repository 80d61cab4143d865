//! Run configuration, presets and the per-run manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use evac_core::harness::{Component, GraphConfig, ModelConfig, RollingConfig, DEFAULT_FIRE_DISTANCE_CAP};
use evac_core::synthetic::ScenarioConfig;
use evac_core::trip::InferenceParams;
use serde::{Deserialize, Serialize};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));
pub const MANIFEST_FILE: &str = "manifest.json";

/// A configuration problem the user can fix. Exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub components: Vec<Component>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            components: Component::ALL.to_vec(),
        }
    }
}

/// Everything a subcommand reads from `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads, 0 for one per core.
    pub threads: usize,
    /// Distances beyond this many km are clipped.
    pub fire_distance_cap_km: f64,
    pub scenario: ScenarioConfig,
    pub inference: InferenceParams,
    pub graph: GraphConfig,
    pub rolling: RollingConfig,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            threads: 0,
            fire_distance_cap_km: DEFAULT_FIRE_DISTANCE_CAP,
            scenario: ScenarioConfig::default(),
            inference: InferenceParams::default(),
            graph: GraphConfig::default(),
            rolling: RollingConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-size layers and the long training schedule.
    Full,
    /// Small layers and short training for a single core.
    Desk,
}

impl Preset {
    pub fn params(self) -> ModelConfig {
        match self {
            Preset::Full => ModelConfig::default(),
            Preset::Desk => ModelConfig::desk(),
        }
    }
}

impl RunConfig {
    pub fn validate_common(&self) -> Result<()> {
        let i = &self.inference;
        if !(i.radius_m > 0.0) {
            return Err(config_error("inference.radius_m must be positive"));
        }
        if i.min_stay_min < 0 {
            return Err(config_error("inference.min_stay_min must not be negative"));
        }
        if !(i.max_error_m > 0.0) {
            return Err(config_error("inference.max_error_m must be positive"));
        }
        for (name, t) in [
            ("graph.env_threshold", self.graph.env_threshold),
            ("graph.demo_threshold", self.graph.demo_threshold),
        ] {
            if !(-1.0..=1.0).contains(&t) {
                return Err(config_error(format!("{name} must lie in [-1, 1], got {t}")));
            }
        }
        if !(self.fire_distance_cap_km > 0.0) {
            return Err(config_error("fire_distance_cap_km must be positive"));
        }
        Ok(())
    }

    pub fn validate_rolling(&self) -> Result<()> {
        self.validate_common()?;
        self.rolling
            .validate()
            .map_err(|e| config_error(format!("rolling: {}", strip_prefix(&e.to_string()))))
    }

    pub fn validate_scenario(&self) -> Result<()> {
        self.scenario
            .validate()
            .map_err(|e| config_error(format!("scenario: {}", strip_prefix(&e.to_string()))))
    }
}

fn strip_prefix(msg: &str) -> &str {
    msg.strip_prefix("invalid input: ").unwrap_or(msg)
}

/// What a run read and wrote, enough to repeat it with `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub subcommand: String,
    pub config_file: Option<PathBuf>,
    pub seed: u64,
    pub inputs: BTreeMap<String, PathBuf>,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// The resolved configuration plus any inputs recorded by an earlier run.
pub struct Loaded {
    pub config: RunConfig,
    pub inputs: BTreeMap<String, PathBuf>,
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Resolves the configuration: defaults, then the preset, then the file.
/// A `.json` file is read as a manifest from an earlier run and replaces
/// the configuration wholesale; it must come from the same subcommand.
pub fn load(path: Option<&Path>, preset: Option<Preset>, subcommand: &str) -> Result<Loaded> {
    let mut base = RunConfig::default();
    if let Some(p) = preset {
        base.rolling.params = p.params();
    }
    let Some(path) = path else {
        return Ok(Loaded {
            config: base,
            inputs: BTreeMap::new(),
        });
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| config_error(format!("{}: not a run manifest: {e}", path.display())))?;
        if m.subcommand != subcommand {
            return Err(config_error(format!(
                "{} was written by `{}`, not `{subcommand}`",
                path.display(),
                m.subcommand
            )));
        }
        let mut config = m.config;
        if let Some(p) = preset {
            config.rolling.params = p.params();
        }
        return Ok(Loaded {
            config,
            inputs: m.inputs,
        });
    }
    // parsing the file alone first reports errors against its own lines
    toml::from_str::<RunConfig>(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let over: toml::Value = toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let mut value = toml::Value::try_from(&base).context("serializing default configuration")?;
    merge(&mut value, over);
    let config: RunConfig = value
        .try_into()
        .map_err(|e: toml::de::Error| config_error(format!("{}: {}", path.display(), e.message())))?;
    Ok(Loaded {
        config,
        inputs: BTreeMap::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.toml",
            "[rolling]\ndelay_hours = 24\n[rolling.params.train]\nmax_epochs = 7\n",
        );
        let c = load(Some(&p), Some(Preset::Desk), "train").unwrap().config;
        assert_eq!(c.rolling.delay_hours, 24);
        assert_eq!(c.rolling.params.train.max_epochs, 7);
        assert_eq!(c.rolling.params.gru_hidden, ModelConfig::desk().gru_hidden);
        assert_eq!(c.inference, InferenceParams::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.toml", "thread = 2\n");
        let err = load(Some(&p), None, "train").err().unwrap();
        assert!(err.downcast_ref::<ConfigError>().is_some());
        assert!(err.to_string().contains("thread"), "{err}");
    }

    #[test]
    fn manifest_from_another_subcommand_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest {
            version: VERSION.into(),
            subcommand: "generate".into(),
            config_file: None,
            seed: 0,
            inputs: BTreeMap::new(),
            outputs: vec![],
            config: RunConfig::default(),
        };
        let p = m.write(dir.path()).unwrap();
        assert!(load(Some(&p), None, "generate").is_ok());
        assert!(load(Some(&p), None, "ablate").is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = RunConfig::default();
        c.inference.radius_m = 0.0;
        assert!(c
            .validate_common()
            .unwrap_err()
            .to_string()
            .contains("inference.radius_m"));
        let mut c = RunConfig::default();
        c.rolling.params.train.learning_rate = -1.0;
        assert!(c.validate_rolling().unwrap_err().to_string().contains("learning_rate"));
    }
}
