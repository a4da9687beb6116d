//! Layered run configuration: built-in defaults, then a TOML file, then
//! `ADG__SECTION__KEY` environment variables, then `key.path=value` overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::data::{cache, generate_synthetic, ingest_dsads, ingest_oppt, ClusterMap, DataError, NanPolicy, OpptColumnMap, OpptWindow, SampleSet, SynthSpec};
use crate::graphs::SensorLayout;
use crate::model::ModelConfig;
use crate::train::{TrainConfig, TrainMode};

pub const ENV_PREFIX: &str = "ADG__";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("{origin}: {detail}")]
    Parse { origin: String, detail: String },
    #[error("bad override {0:?}: expected key.path=value")]
    Override(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    #[default]
    Synth,
    Dsads,
    Oppt,
}

impl std::str::FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "synth" => Ok(DatasetKind::Synth),
            "dsads" => Ok(DatasetKind::Dsads),
            "oppt" => Ok(DatasetKind::Oppt),
            other => Err(format!("unknown dataset {other:?} (expected synth, dsads or oppt)")),
        }
    }
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Synth => "synth",
            DatasetKind::Dsads => "dsads",
            DatasetKind::Oppt => "oppt",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Raw dataset directory (dsads, oppt).
    pub root: Option<PathBuf>,
    /// Sample cache written by `adg ingest`; used instead of `root` when set.
    pub cache: Option<PathBuf>,
    /// Built-in layout name or path to a layout file. Defaults per dataset.
    pub layout: Option<String>,
    /// OPPT column map file; the shipped map is used when unset.
    pub columns: Option<PathBuf>,
    pub nan: NanPolicy,
    pub window: OpptWindow,
    /// Replaces the built-in subject clusters.
    pub clusters: Option<BTreeMap<String, Vec<String>>>,
}

impl DatasetConfig {
    pub fn layout_ref(&self) -> &str {
        match (&self.layout, self.kind) {
            (Some(l), _) => l,
            (None, DatasetKind::Oppt) => "oppt",
            (None, _) => "dsads",
        }
    }

    /// Resolves `layout` as a built-in name first, then as a file path.
    pub fn load_layout(&self) -> Result<SensorLayout, ConfigError> {
        let r = self.layout_ref();
        if let Some(l) = SensorLayout::builtin(r) {
            if !Path::new(r).exists() {
                return Ok(l);
            }
        }
        let path = Path::new(r);
        if !path.exists() {
            return Err(ConfigError::Io {
                path: path.display().to_string(),
                detail: "layout file not found".into(),
            });
        }
        SensorLayout::load(path).map_err(|e| ConfigError::Parse {
            origin: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    pub fn cluster_map(&self, synth: &SynthSpec) -> Result<ClusterMap, ConfigError> {
        match (&self.clusters, self.kind) {
            (Some(c), _) => ClusterMap::new(c.clone()).map_err(|e| ConfigError::Invalid(e.to_string())),
            (None, DatasetKind::Synth) => Ok(synth.clusters()),
            (None, DatasetKind::Dsads) => Ok(ClusterMap::dsads()),
            (None, DatasetKind::Oppt) => Ok(ClusterMap::oppt()),
        }
    }
}

fn default_modes() -> Vec<TrainMode> {
    TrainMode::GRID.to_vec()
}

fn default_jobs() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "default_modes")]
    pub modes: Vec<TrainMode>,
    pub dataset: DatasetConfig,
    pub synth: SynthSpec,
    pub train: TrainConfig,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            jobs: default_jobs(),
            modes: default_modes(),
            dataset: DatasetConfig::default(),
            synth: SynthSpec::default(),
            train: TrainConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate().map_err(ConfigError::Invalid)?;
        if self.modes.is_empty() {
            return Err(ConfigError::Invalid("modes must not be empty".into()));
        }
        if self.jobs == 0 {
            return Err(ConfigError::Invalid("jobs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

/// A resolved config plus a log of which layer set which key.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub config: RunConfig,
    pub trail: Vec<String>,
}

impl Resolved {
    /// Snapshot written beside run outputs; reloading it reproduces `config`.
    pub fn snapshot(&self) -> String {
        let mut s = String::from("# resolved configuration\n");
        for t in &self.trail {
            s.push_str(&format!("# {t}\n"));
        }
        s.push('\n');
        s.push_str(&self.config.to_toml());
        s
    }
}

fn merge(base: &mut Table, layer: Table, prefix: &str, origin: &str, trail: &mut Vec<String>) {
    for (k, v) in layer {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t, &key, origin, trail),
            (_, v) => {
                trail.push(format!("{key} = {v} ({origin})"));
                base.insert(k, v);
            }
        }
    }
}

fn parse_scalar(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key v"),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn nested(path: &[&str], value: Value) -> Table {
    let mut t = Table::new();
    match path {
        [last] => {
            t.insert(last.to_string(), value);
        }
        [first, rest @ ..] => {
            t.insert(first.to_string(), Value::Table(nested(rest, value)));
        }
        [] => {}
    }
    t
}

fn override_table(spec: &str) -> Result<Table, ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.into()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(spec.into()));
    }
    Ok(nested(&path, parse_scalar(raw.trim())))
}

/// Builds the run config from its layers. `env` is usually `std::env::vars()`;
/// only keys starting with [`ENV_PREFIX`] are used.
pub fn resolve(
    file: Option<&Path>,
    env: impl IntoIterator<Item = (String, String)>,
    overrides: &[String],
) -> Result<Resolved, ConfigError> {
    let mut trail = Vec::new();
    let mut table: Table = toml::to_string(&RunConfig::default())
        .expect("defaults serialize")
        .parse()
        .expect("defaults parse");
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let layer: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
            origin: path.display().to_string(),
            detail: e.to_string(),
        })?;
        merge(&mut table, layer, "", &path.display().to_string(), &mut trail);
    }
    let mut env: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    env.sort();
    for (k, v) in env {
        let key = k[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect::<Vec<_>>().join(".");
        let layer = override_table(&format!("{key}={v}"))?;
        merge(&mut table, layer, "", &format!("env {k}"), &mut trail);
    }
    for o in overrides {
        let layer = override_table(o)?;
        merge(&mut table, layer, "", "--set", &mut trail);
    }
    let config: RunConfig = Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
        origin: "resolved configuration".into(),
        detail: e.to_string(),
    })?;
    config.validate()?;
    Ok(Resolved { config, trail })
}

/// Samples plus the layout and subject clusters they were read with.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub set: SampleSet,
    pub layout: SensorLayout,
    pub clusters: ClusterMap,
    pub warnings: Vec<String>,
}

impl DatasetConfig {
    /// Reads raw samples for `kind`: generated for synth, ingested from `root` otherwise.
    pub fn ingest(&self, synth: &SynthSpec) -> Result<LoadedData, ConfigError> {
        let layout = self.load_layout()?;
        let clusters = self.cluster_map(synth)?;
        let (set, warnings) = match self.kind {
            DatasetKind::Synth => {
                let layout = layout.with_channels(synth.channels);
                let set = generate_synthetic(synth, layout.len())?;
                return Ok(LoadedData { set, layout, clusters, warnings: Vec::new() });
            }
            DatasetKind::Dsads => {
                let got = ingest_dsads(self.require_root()?, &layout, &clusters, self.nan)?;
                (got.set, got.warnings)
            }
            DatasetKind::Oppt => {
                let map = match &self.columns {
                    Some(p) => OpptColumnMap::load(p)?,
                    None => OpptColumnMap::builtin(),
                };
                let got = ingest_oppt(self.require_root()?, &layout, &map, self.window, &clusters, self.nan)?;
                (got.set, got.warnings)
            }
        };
        Ok(LoadedData { set, layout, clusters, warnings })
    }

    /// Like [`ingest`](Self::ingest), but reads `cache` instead when it is set.
    pub fn load(&self, synth: &SynthSpec) -> Result<LoadedData, ConfigError> {
        let Some(path) = &self.cache else {
            return self.ingest(synth);
        };
        let mut layout = self.load_layout()?;
        if self.kind == DatasetKind::Synth {
            layout = layout.with_channels(synth.channels);
        }
        let clusters = self.cluster_map(synth)?;
        let set = cache::load(path)?;
        if set.nodes != layout.len() {
            return Err(ConfigError::Invalid(format!(
                "cache {} has {} nodes but layout {} has {}",
                path.display(),
                set.nodes,
                layout.name(),
                layout.len()
            )));
        }
        Ok(LoadedData { set, layout, clusters, warnings: Vec::new() })
    }

    fn require_root(&self) -> Result<&Path, ConfigError> {
        self.root
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid(format!("dataset.root is required for {}", self.kind.name())))
    }
}

/// Parses a snapshot or config file without layering.
pub fn from_toml_str(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        origin: "config".into(),
        detail: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}
