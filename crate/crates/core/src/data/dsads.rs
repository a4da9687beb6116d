use std::fs;
use std::path::{Path, PathBuf};

use super::{io_err, ClusterMap, DataError, Ingested, NanPolicy, Provenance, SampleSet, WindowedSample};
use crate::graphs::SensorLayout;

/// Rows per 5-second segment (25 Hz).
pub const DSADS_ROWS: usize = 125;

pub const DSADS_ACTIVITIES: [&str; 19] = [
    "Sitting",
    "Standing",
    "Lying On Back",
    "Lying On Right",
    "Ascending Stairs",
    "Descending Stairs",
    "Standing In Elevator Still",
    "Moving Around In Elevator",
    "Walking In Parking Lot",
    "Walking On Treadmill In Flat",
    "Walking On Treadmill Inclined Positions",
    "Running On Treadmill In Flat",
    "Exercising On Stepper",
    "Exercising On Cross Trainer",
    "Cycling On Exercise Bike In Horizontal Positions",
    "Cycling On Exercise Bike In Vertical Positions",
    "Rowing",
    "Jumping",
    "Playing Basketball",
];

/// Sorted `(number, path)` for entries named `<prefix><digits><suffix>`.
fn numbered(dir: &Path, prefix: &str, suffix: &str, want_dir: bool) -> Result<Vec<(usize, PathBuf)>, DataError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        if path.is_dir() != want_dir {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(digits) = name.strip_prefix(prefix).and_then(|r| r.strip_suffix(suffix)) else {
            continue;
        };
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            out.push((digits.parse().expect("digits"), path));
        }
    }
    out.sort();
    Ok(out)
}

/// Parses one segment file into `[rows][columns]`, keeping NaN cells.
pub(super) fn parse_rows(path: &Path, text: &str, sep: Option<char>, columns: usize) -> Result<Vec<Vec<f32>>, DataError> {
    let file = path.display().to_string();
    let mut rows = Vec::new();
    for (r, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = match sep {
            Some(c) => line.split(c).map(str::trim).collect(),
            None => line.split_whitespace().collect(),
        };
        if cells.len() != columns {
            return Err(DataError::Ingest {
                file,
                detail: format!("row {} has {} columns, expected {columns}", r + 1, cells.len()),
            });
        }
        let mut row = Vec::with_capacity(columns);
        for (c, cell) in cells.iter().enumerate() {
            let v = if cell.is_empty() {
                f32::NAN
            } else {
                cell.parse::<f32>().map_err(|_| DataError::Ingest {
                    file: file.clone(),
                    detail: format!("row {} column {}: cannot parse {cell:?}", r + 1, c + 1),
                })?
            };
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Gathers `rows[offset..offset+len]` into `[nodes, channels, len]` using
/// `columns[node][channel]`, then applies the NaN policy per channel.
pub(super) fn gather_window(
    rows: &[Vec<f32>],
    offset: usize,
    len: usize,
    columns: &[Vec<usize>],
    nan: NanPolicy,
) -> Option<Vec<f32>> {
    let mut x = Vec::with_capacity(columns.iter().map(Vec::len).sum::<usize>() * len);
    for node in columns {
        for &col in node {
            let start = x.len();
            x.extend(rows[offset..offset + len].iter().map(|r| r[col]));
            if !nan.repair(&mut x[start..]) {
                return None;
            }
        }
    }
    Some(x)
}

/// Reads the public distribution tree `aNN/pM/sKK.txt`.
///
/// Every file must hold exactly [`DSADS_ROWS`] rows of comma-separated
/// values, one column per layout channel in node order. Segment numbers inside
/// a subject directory must run contiguously from 1. Subjects absent from
/// `clusters` are skipped with a warning.
pub fn ingest_dsads(
    root: &Path,
    layout: &SensorLayout,
    clusters: &ClusterMap,
    nan: NanPolicy,
) -> Result<Ingested, DataError> {
    let channels = layout
        .uniform_channels()
        .ok_or_else(|| DataError::Config(format!("layout {} has unequal channel counts", layout.name())))?;
    let width = layout.total_channels();
    let columns: Vec<Vec<usize>> = (0..layout.len())
        .map(|n| (n * channels..(n + 1) * channels).collect())
        .collect();
    let mut set = SampleSet::empty(
        layout.len(),
        channels,
        DSADS_ROWS,
        DSADS_ACTIVITIES.iter().map(|s| s.to_string()).collect(),
        clusters.names(),
    );
    let mut warnings = Vec::new();
    let mut rejected = 0;

    let activities = numbered(root, "a", "", true)?;
    if activities.is_empty() {
        warnings.push(format!("no activity directories under {}", root.display()));
    }
    for (a, adir) in activities {
        if a == 0 || a > DSADS_ACTIVITIES.len() {
            warnings.push(format!("skipping unknown activity directory {}", adir.display()));
            continue;
        }
        for (p, pdir) in numbered(&adir, "p", "", true)? {
            let subject = p.to_string();
            let Some(domain) = clusters.domain_of(&subject) else {
                warnings.push(format!("subject {subject} is in no cluster; skipping {}", pdir.display()));
                continue;
            };
            for (expected, (s, file)) in numbered(&pdir, "s", ".txt", false)?.into_iter().enumerate() {
                if s != expected + 1 {
                    return Err(DataError::Ingest {
                        file: pdir.join(format!("s{:02}.txt", expected + 1)).display().to_string(),
                        detail: "missing segment".into(),
                    });
                }
                let text = fs::read_to_string(&file).map_err(|e| io_err(&file, e))?;
                let rows = parse_rows(&file, &text, Some(','), width)?;
                if rows.len() != DSADS_ROWS {
                    return Err(DataError::Ingest {
                        file: file.display().to_string(),
                        detail: format!("{} rows, expected {DSADS_ROWS}", rows.len()),
                    });
                }
                match gather_window(&rows, 0, DSADS_ROWS, &columns, nan) {
                    Some(x) => set.samples.push(WindowedSample {
                        x,
                        activity: a - 1,
                        domain,
                        subject: subject.clone(),
                        provenance: Provenance {
                            file: file.display().to_string(),
                            offset: 0,
                        },
                    }),
                    None => rejected += 1,
                }
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    set.validate()?;
    Ok(Ingested { set, warnings, rejected })
}
