//! Windowed samples, dataset ingest, leave-one-cluster-out splits and the
//! synthetic multi-user generator.

pub mod cache;
mod dsads;
mod loso;
mod nan;
mod norm;
mod oppt;
mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::Real;
use crate::model::Batch;

pub use dsads::{ingest_dsads, DSADS_ACTIVITIES, DSADS_ROWS};
pub use loso::{make_loso_splits, LosoSplit};
pub use nan::NanPolicy;
pub use norm::ChannelStats;
pub use oppt::{ingest_oppt, LabelCode, NodeColumns, OpptColumnMap, OpptWindow, OPPT_COLUMNS};
pub use synth::{generate_synthetic, template_error, SynthSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("ingest error in {file}: {detail}")]
    Ingest { file: String, detail: String },
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("data config error: {0}")]
    Config(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("sample cache error: {0}")]
    Cache(String),
    #[error("invalid sample {index}: {detail}")]
    Invalid { index: usize, detail: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub file: String,
    /// First row of the window inside `file`.
    pub offset: usize,
}

/// One fixed-length multi-channel window, laid out `[nodes, channels, length]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedSample {
    pub x: Vec<f32>,
    pub activity: usize,
    /// Index into [`SampleSet::domain_names`] (the subject's cluster).
    pub domain: usize,
    pub subject: String,
    pub provenance: Provenance,
}

/// Immutable store of windows sharing one shape and label vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub nodes: usize,
    pub channels: usize,
    pub length: usize,
    pub activity_names: Vec<String>,
    pub domain_names: Vec<String>,
    pub samples: Vec<WindowedSample>,
}

impl SampleSet {
    pub fn empty(nodes: usize, channels: usize, length: usize, activity_names: Vec<String>, domain_names: Vec<String>) -> Self {
        SampleSet {
            nodes,
            channels,
            length,
            activity_names,
            domain_names,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.nodes * self.channels * self.length
    }

    pub fn classes(&self) -> usize {
        self.activity_names.len()
    }

    /// Checks every sample against the store's shape and label ranges.
    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.window_len();
        for (index, s) in self.samples.iter().enumerate() {
            let fail = |detail: String| Err(DataError::Invalid { index, detail });
            if s.x.len() != n {
                return fail(format!("window has {} values, expected {n}", s.x.len()));
            }
            if s.activity >= self.activity_names.len() {
                return fail(format!("activity {} out of range", s.activity));
            }
            if s.domain >= self.domain_names.len() {
                return fail(format!("domain {} out of range", s.domain));
            }
            if s.x.iter().any(|v| !v.is_finite()) {
                return fail("non-finite value".into());
            }
        }
        Ok(())
    }

    /// Samples per activity, indexed by activity.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes()];
        for s in &self.samples {
            c[s.activity] += 1;
        }
        c
    }

    /// Assembles the windows at `indices` into a batch; `domain_of(i)` supplies
    /// the discriminator label of sample `i`.
    pub fn batch<T: Real>(
        &self,
        indices: &[usize],
        domain_of: impl Fn(usize) -> usize,
        stats: Option<&ChannelStats>,
    ) -> Batch<T> {
        let n = self.window_len();
        let mut x = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            let s = &self.samples[i];
            match stats {
                Some(st) => x.extend(st.apply_window(&s.x, self.length).map(T::of)),
                None => x.extend(s.x.iter().map(|&v| T::of(v as f64))),
            }
        }
        Batch {
            x,
            activity: indices.iter().map(|&i| self.samples[i].activity).collect(),
            domain: indices.iter().map(|&i| domain_of(i)).collect(),
            nodes: self.nodes,
            channels: self.channels,
            length: self.length,
        }
    }
}

/// Named groups of subject ids; each group is one source-user domain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterMap {
    pub clusters: BTreeMap<String, Vec<String>>,
}

impl ClusterMap {
    pub fn new(clusters: impl IntoIterator<Item = (String, Vec<String>)>) -> Result<Self, DataError> {
        let clusters: BTreeMap<_, _> = clusters.into_iter().collect();
        let mut seen = BTreeMap::new();
        for (name, subjects) in &clusters {
            for s in subjects {
                if let Some(prev) = seen.insert(s.clone(), name.clone()) {
                    return Err(DataError::Config(format!(
                        "subject {s} belongs to both {prev} and {name}"
                    )));
                }
            }
        }
        Ok(ClusterMap { clusters })
    }

    /// Four subject pairs `A = [1,2] … D = [7,8]`.
    pub fn dsads() -> Self {
        Self::from_pairs(&[("A", &["1", "2"]), ("B", &["3", "4"]), ("C", &["5", "6"]), ("D", &["7", "8"])])
    }

    /// One subject per cluster, `A = [S1] … D = [S4]`.
    pub fn oppt() -> Self {
        Self::from_pairs(&[("A", &["S1"]), ("B", &["S2"]), ("C", &["S3"]), ("D", &["S4"])])
    }

    fn from_pairs(pairs: &[(&str, &[&str])]) -> Self {
        ClusterMap::new(
            pairs
                .iter()
                .map(|(n, s)| (n.to_string(), s.iter().map(|x| x.to_string()).collect())),
        )
        .expect("built-in clusters are disjoint")
    }

    pub fn names(&self) -> Vec<String> {
        self.clusters.keys().cloned().collect()
    }

    /// Index (in name order) of the cluster containing `subject`.
    pub fn domain_of(&self, subject: &str) -> Option<usize> {
        self.clusters
            .values()
            .position(|subjects| subjects.iter().any(|s| s == subject))
    }
}

/// Result of an ingest pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub set: SampleSet,
    pub warnings: Vec<String>,
    /// Windows dropped by the NaN policy.
    pub rejected: usize,
}

fn io_err(path: &std::path::Path, e: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_lookup() {
        let c = ClusterMap::dsads();
        assert_eq!(c.names(), ["A", "B", "C", "D"]);
        assert_eq!(c.domain_of("5"), Some(2));
        assert_eq!(c.domain_of("9"), None);
        assert!(ClusterMap::new([
            ("A".to_string(), vec!["1".to_string()]),
            ("B".to_string(), vec!["1".to_string()])
        ])
        .is_err());
    }
}
