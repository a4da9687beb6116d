use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GraphError;

pub const DSADS_LAYOUT: &str = include_str!("../../layouts/dsads.layout");
pub const OPPT_LAYOUT: &str = include_str!("../../layouts/oppt.layout");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Middle,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorPosition {
    pub id: usize,
    pub name: String,
    pub side: Side,
    #[serde(default)]
    pub links: Vec<usize>,
    pub channels: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutFile {
    name: String,
    #[serde(rename = "position")]
    positions: Vec<SensorPosition>,
}

/// Validated sensor layout; positions are stored in id order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SensorLayout {
    name: String,
    positions: Vec<SensorPosition>,
}

impl SensorLayout {
    pub fn new(name: impl Into<String>, mut positions: Vec<SensorPosition>) -> Result<Self, GraphError> {
        let name = name.into();
        if positions.is_empty() {
            return Err(GraphError::Layout(format!("{name}: no positions")));
        }
        positions.sort_by_key(|p| p.id);
        for (i, p) in positions.iter().enumerate() {
            if p.id != i {
                return Err(GraphError::Layout(format!(
                    "{name}: ids must be dense 0..{}, found {} at rank {i}",
                    positions.len() - 1,
                    p.id
                )));
            }
            if p.channels == 0 {
                return Err(GraphError::Layout(format!("{name}: {} has zero channels", p.name)));
            }
        }
        let n = positions.len();
        for p in &positions {
            let mut seen = BTreeSet::new();
            for &l in &p.links {
                if l >= n {
                    return Err(GraphError::Layout(format!(
                        "{name}: {} links to unknown id {l}",
                        p.name
                    )));
                }
                if l == p.id {
                    return Err(GraphError::Layout(format!("{name}: {} links to itself", p.name)));
                }
                if !seen.insert(l) {
                    return Err(GraphError::Layout(format!(
                        "{name}: {} lists link {l} twice",
                        p.name
                    )));
                }
                if !positions[l].links.contains(&p.id) {
                    return Err(GraphError::AsymmetricLink {
                        from: p.name.clone(),
                        to: positions[l].name.clone(),
                    });
                }
            }
        }
        Ok(SensorLayout { name, positions })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, GraphError> {
        let file: LayoutFile =
            toml::from_str(text).map_err(|e| GraphError::Layout(format!("parse error: {e}")))?;
        SensorLayout::new(file.name, file.positions)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        SensorLayout::from_toml_str(&text)
    }

    /// One of the shipped layouts by name (`dsads` or `oppt`).
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "dsads" => DSADS_LAYOUT,
            "oppt" => OPPT_LAYOUT,
            _ => return None,
        };
        Some(SensorLayout::from_toml_str(text).expect("shipped layouts are valid"))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn positions(&self) -> &[SensorPosition] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.positions.iter().map(|p| p.name.as_str()).collect()
    }

    /// Channel count shared by every position, if uniform.
    pub fn uniform_channels(&self) -> Option<usize> {
        let c = self.positions[0].channels;
        self.positions.iter().all(|p| p.channels == c).then_some(c)
    }

    pub fn total_channels(&self) -> usize {
        self.positions.iter().map(|p| p.channels).sum()
    }

    /// Copy of the layout with every position carrying `channels` channels.
    pub fn with_channels(&self, channels: usize) -> Self {
        let mut out = self.clone();
        for p in &mut out.positions {
            p.channels = channels;
        }
        out
    }
}

/// Side-neutral body-part name: lowercase words joined by `_` with a leading
/// `left`/`right` word removed.
pub(crate) fn mirror_key(name: &str) -> String {
    let lowered = name.to_lowercase().replace([' ', '-'], "_");
    let words: Vec<&str> = lowered.split('_').filter(|w| !w.is_empty()).collect();
    match words.first() {
        Some(&"left") | Some(&"right") => words[1..].join("_"),
        _ => words.join("_"),
    }
}
