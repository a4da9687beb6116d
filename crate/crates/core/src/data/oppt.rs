use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dsads::gather_window;
use super::{io_err, ClusterMap, DataError, Ingested, NanPolicy, Provenance, SampleSet, WindowedSample};
use crate::graphs::SensorLayout;

pub const OPPT_COLUMNS: &str = include_str!("../../layouts/oppt.columns");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeColumns {
    pub name: String,
    /// 1-based column numbers, one per channel.
    pub columns: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelCode {
    pub code: u64,
    pub name: String,
}

/// Which recording columns feed each sensor position, and the label vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpptColumnMap {
    pub label_column: usize,
    pub null_label: u64,
    #[serde(rename = "node")]
    pub nodes: Vec<NodeColumns>,
    #[serde(rename = "label")]
    pub labels: Vec<LabelCode>,
}

impl OpptColumnMap {
    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        toml::from_str(text).map_err(|e| DataError::Config(format!("column map: {e}")))
    }

    pub fn builtin() -> Self {
        Self::from_toml_str(OPPT_COLUMNS).expect("shipped column map parses")
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Checks node names and channel counts against `layout`, returning
    /// 0-based column indices per node.
    fn resolve(&self, layout: &SensorLayout) -> Result<Vec<Vec<usize>>, DataError> {
        if self.nodes.len() != layout.len() {
            return Err(DataError::Config(format!(
                "column map lists {} nodes, layout {} has {}",
                self.nodes.len(),
                layout.name(),
                layout.len()
            )));
        }
        let mut out = Vec::new();
        for (n, p) in self.nodes.iter().zip(layout.positions()) {
            if n.name != p.name || n.columns.len() != p.channels {
                return Err(DataError::Config(format!(
                    "column map node {} ({} columns) does not match layout position {} ({} channels)",
                    n.name,
                    n.columns.len(),
                    p.name,
                    p.channels
                )));
            }
            if n.columns.contains(&0) {
                return Err(DataError::Config("column numbers start at 1".into()));
            }
            out.push(n.columns.iter().map(|c| c - 1).collect());
        }
        if self.label_column == 0 || self.labels.is_empty() {
            return Err(DataError::Config("column map needs a label column and labels".into()));
        }
        Ok(out)
    }
}

/// Sliding window over the 30 Hz stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpptWindow {
    pub length: usize,
    pub step: usize,
}

impl Default for OpptWindow {
    fn default() -> Self {
        OpptWindow { length: 64, step: 32 }
    }
}

fn recordings(root: &Path) -> Result<Vec<(String, PathBuf)>, DataError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| io_err(root, e))? {
        let path = entry.map_err(|e| io_err(root, e))?.path();
        if path.extension().is_some_and(|e| e == "dat") && path.is_file() {
            let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
            let subject = stem.split('-').next().unwrap_or_default().to_string();
            out.push((subject, path));
        }
    }
    out.sort_by(|a, b| a.1.cmp(&b.1));
    Ok(out)
}

/// Reads the needed columns of one recording; label cells that are not
/// integers count as null.
fn read_recording(path: &Path, needed: &[usize], label: usize, null: u64) -> Result<(Vec<Vec<f32>>, Vec<u64>), DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let want = needed.iter().copied().chain([label]).max().unwrap_or(0) + 1;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (r, line) in text.lines().enumerate() {
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.is_empty() {
            continue;
        }
        if cells.len() < want {
            return Err(DataError::Ingest {
                file: path.display().to_string(),
                detail: format!("row {} has {} columns, need at least {want}", r + 1, cells.len()),
            });
        }
        let mut row = vec![f32::NAN; want];
        for &c in needed {
            row[c] = cells[c].parse().map_err(|_| DataError::Ingest {
                file: path.display().to_string(),
                detail: format!("row {} column {}: cannot parse {:?}", r + 1, c + 1, cells[c]),
            })?;
        }
        let code = cells[label]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0 && v.fract() == 0.0)
            .map_or(null, |v| v as u64);
        rows.push(row);
        labels.push(code);
    }
    Ok((rows, labels))
}

/// Most frequent code in the window; ties go to the smaller code.
fn majority(codes: &[u64]) -> u64 {
    let mut counts = BTreeMap::new();
    for &c in codes {
        *counts.entry(c).or_insert(0usize) += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    counts.into_iter().find(|&(_, n)| n == best).map_or(0, |(c, _)| c)
}

/// Reads every `S<k>-*.dat` recording in `root` and cuts sliding windows.
///
/// A window's label is its majority code; windows whose majority is the null
/// label or a code outside the map are skipped.
pub fn ingest_oppt(
    root: &Path,
    layout: &SensorLayout,
    map: &OpptColumnMap,
    window: OpptWindow,
    clusters: &ClusterMap,
    nan: NanPolicy,
) -> Result<Ingested, DataError> {
    if window.length == 0 || window.step == 0 {
        return Err(DataError::Config("window length and step must be positive".into()));
    }
    let columns = map.resolve(layout)?;
    let channels = layout
        .uniform_channels()
        .ok_or_else(|| DataError::Config(format!("layout {} has unequal channel counts", layout.name())))?;
    let needed: Vec<usize> = columns.iter().flatten().copied().collect();
    let code_index: BTreeMap<u64, usize> = map.labels.iter().enumerate().map(|(i, l)| (l.code, i)).collect();
    let mut set = SampleSet::empty(
        layout.len(),
        channels,
        window.length,
        map.labels.iter().map(|l| l.name.clone()).collect(),
        clusters.names(),
    );
    let mut warnings = Vec::new();
    let mut rejected = 0;

    let files = recordings(root)?;
    if files.is_empty() {
        warnings.push(format!("no .dat recordings under {}", root.display()));
    }
    for (subject, file) in files {
        let Some(domain) = clusters.domain_of(&subject) else {
            warnings.push(format!("subject {subject} is in no cluster; skipping {}", file.display()));
            continue;
        };
        let (rows, labels) = read_recording(&file, &needed, map.label_column - 1, map.null_label)?;
        let mut offset = 0;
        while offset + window.length <= rows.len() {
            let code = majority(&labels[offset..offset + window.length]);
            if code != map.null_label {
                if let Some(&activity) = code_index.get(&code) {
                    match gather_window(&rows, offset, window.length, &columns, nan) {
                        Some(x) => set.samples.push(WindowedSample {
                            x,
                            activity,
                            domain,
                            subject: subject.clone(),
                            provenance: Provenance {
                                file: file.display().to_string(),
                                offset,
                            },
                        }),
                        None => rejected += 1,
                    }
                }
            }
            offset += window.step;
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    set.validate()?;
    Ok(Ingested { set, warnings, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write;

    fn small_map() -> OpptColumnMap {
        let mut map = OpptColumnMap::builtin();
        map.label_column = 7;
        for (i, n) in map.nodes.iter_mut().enumerate() {
            n.columns = vec![i + 2];
        }
        map
    }

    fn recording(labels: &[(usize, u64)]) -> String {
        let mut s = String::new();
        let mut t = 0;
        for &(n, code) in labels {
            for _ in 0..n {
                writeln!(s, "{} {} {} {} {} {} {code}", t * 33, t, t + 1, t + 2, t + 3, t + 4).unwrap();
                t += 1;
            }
        }
        s
    }

    fn run(dir: &Path, nan: NanPolicy) -> Result<Ingested, DataError> {
        let layout = SensorLayout::builtin("oppt").unwrap().with_channels(1);
        ingest_oppt(dir, &layout, &small_map(), OpptWindow::default(), &ClusterMap::oppt(), nan)
    }

    #[test]
    fn builtin_map_matches_layout() {
        let map = OpptColumnMap::builtin();
        let cols = map.resolve(&SensorLayout::builtin("oppt").unwrap()).unwrap();
        assert_eq!(cols.len(), 5);
        assert_eq!(cols[0][0], 37);
        assert_eq!(map.labels.len(), 17);
        assert_eq!(map.labels[0].name, "Open Door 1");
        assert_eq!(map.labels[16].name, "Toggle Switch");
    }

    #[test]
    fn mini_fixture_windows_by_majority_label() {
        let tmp = tempfile::tempdir().unwrap();
        // S1: 100 rows Open Door 1 then 60 null -> offsets 0, 32, 64 kept, 96 null
        fs::write(tmp.path().join("S1-ADL1.dat"), recording(&[(100, 406516), (60, 0)])).unwrap();
        // S2: 128 rows Close Door 1 -> offsets 0, 32, 64
        fs::write(tmp.path().join("S2-ADL1.dat"), recording(&[(128, 404516)])).unwrap();
        fs::write(tmp.path().join("notes.txt"), "ignored").unwrap();
        let out = run(tmp.path(), NanPolicy::Reject).unwrap();
        let got: Vec<(String, usize, usize, usize)> = out
            .set
            .samples
            .iter()
            .map(|s| (s.subject.clone(), s.activity, s.domain, s.provenance.offset))
            .collect();
        let want: Vec<(String, usize, usize, usize)> = [
            ("S1", 0, 0, 0),
            ("S1", 0, 0, 32),
            ("S1", 0, 0, 64),
            ("S2", 2, 1, 0),
            ("S2", 2, 1, 32),
            ("S2", 2, 1, 64),
        ]
        .iter()
        .map(|&(s, a, d, o)| (s.to_string(), a, d, o))
        .collect();
        assert_eq!(got, want);
        let s = &out.set.samples[1];
        // node 3 reads file column 5, which holds t + 3
        assert_eq!(s.x[3 * 64], 35.0);
        assert_eq!(out.set.length, 64);
    }

    #[test]
    fn tie_goes_to_smaller_code() {
        assert_eq!(majority(&[5, 5, 0, 0]), 0);
        assert_eq!(majority(&[7, 5, 7]), 7);
    }

    #[test]
    fn dropouts_interpolate_or_reject() {
        let tmp = tempfile::tempdir().unwrap();
        let mut text = recording(&[(64, 406516)]);
        let lines: Vec<String> = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                let mut c: Vec<String> = l.split(' ').map(String::from).collect();
                if (10..13).contains(&i) {
                    c[1] = "NaN".into();
                }
                c.join(" ")
            })
            .collect();
        text = lines.join("\n");
        fs::write(tmp.path().join("S3-Drill.dat"), text).unwrap();
        let out = run(tmp.path(), NanPolicy::default()).unwrap();
        assert_eq!(out.set.len(), 1);
        assert_eq!(out.set.samples[0].x[11], 11.0);
        let out = run(tmp.path(), NanPolicy::Reject).unwrap();
        assert_eq!((out.set.len(), out.rejected), (0, 1));
    }

    #[test]
    fn empty_directory_warns_and_bad_map_errors() {
        let tmp = tempfile::tempdir().unwrap();
        let out = run(tmp.path(), NanPolicy::Reject).unwrap();
        assert!(out.set.is_empty() && out.warnings.len() == 1);
        let err = ingest_oppt(
            tmp.path(),
            &SensorLayout::builtin("oppt").unwrap(),
            &small_map(),
            OpptWindow::default(),
            &ClusterMap::oppt(),
            NanPolicy::Reject,
        );
        assert!(matches!(err, Err(DataError::Config(_))));
    }
}
