//! Columnar binary sample cache.
//!
//! ```text
//! magic "ADGSMPL\0" | version u32 | nodes u32 | channels u32 | length u32 | count u64
//! tables: activity names, domain names, subjects, provenance files
//!         (each: u32 count, then u32 byte length + UTF-8 per entry)
//! columns (count entries each): activity u32, domain u32, subject u32,
//!         file u32, offset u64, then count * nodes * channels * length f32
//! ```
//! All integers and floats little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{io_err, DataError, Provenance, SampleSet, WindowedSample};

pub const MAGIC: &[u8; 8] = b"ADGSMPL\0";
pub const VERSION: u32 = 1;

struct Interner {
    index: BTreeMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    fn new() -> Self {
        Interner {
            index: BTreeMap::new(),
            names: Vec::new(),
        }
    }

    fn id(&mut self, s: &str) -> u32 {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = self.names.len() as u32;
        self.index.insert(s.to_string(), i);
        self.names.push(s.to_string());
        i
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_table(out: &mut Vec<u8>, names: &[String]) {
    put_u32(out, names.len() as u32);
    for n in names {
        put_u32(out, n.len() as u32);
        out.extend_from_slice(n.as_bytes());
    }
}

pub fn encode(set: &SampleSet) -> Vec<u8> {
    let mut subjects = Interner::new();
    let mut files = Interner::new();
    let subject_ids: Vec<u32> = set.samples.iter().map(|s| subjects.id(&s.subject)).collect();
    let file_ids: Vec<u32> = set.samples.iter().map(|s| files.id(&s.provenance.file)).collect();

    let mut out = Vec::with_capacity(64 + set.len() * (24 + 4 * set.window_len()));
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    for v in [set.nodes, set.channels, set.length] {
        put_u32(&mut out, v as u32);
    }
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    put_table(&mut out, &set.activity_names);
    put_table(&mut out, &set.domain_names);
    put_table(&mut out, &subjects.names);
    put_table(&mut out, &files.names);
    for s in &set.samples {
        put_u32(&mut out, s.activity as u32);
    }
    for s in &set.samples {
        put_u32(&mut out, s.domain as u32);
    }
    for &i in &subject_ids {
        put_u32(&mut out, i);
    }
    for &i in &file_ids {
        put_u32(&mut out, i);
    }
    for s in &set.samples {
        out.extend_from_slice(&(s.provenance.offset as u64).to_le_bytes());
    }
    for s in &set.samples {
        for v in &s.x {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            DataError::Cache(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn table(&mut self) -> Result<Vec<String>, DataError> {
        let n = self.u32()? as usize;
        let mut out = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let len = self.u32()? as usize;
            let s = std::str::from_utf8(self.take(len)?).map_err(|e| DataError::Cache(format!("bad name: {e}")))?;
            out.push(s.to_string());
        }
        Ok(out)
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>, DataError> {
        Ok(self.take(n * 4)?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<SampleSet, DataError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(DataError::Cache("not a sample cache (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(DataError::Cache(format!("unsupported version {version}")));
    }
    let (nodes, channels, length) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let count = usize::try_from(r.u64()?).map_err(|_| DataError::Cache("count overflows".into()))?;
    let activity_names = r.table()?;
    let domain_names = r.table()?;
    let subjects = r.table()?;
    let files = r.table()?;
    let window = nodes * channels * length;
    // reject absurd counts before allocating
    if count.saturating_mul(24 + 4 * window) > bytes.len() {
        return Err(DataError::Cache(format!("{count} samples do not fit in {} bytes", bytes.len())));
    }
    let activity = r.u32s(count)?;
    let domain = r.u32s(count)?;
    let subject = r.u32s(count)?;
    let file = r.u32s(count)?;
    let mut offsets = Vec::with_capacity(count);
    for _ in 0..count {
        offsets.push(r.u64()? as usize);
    }
    let lookup = |table: &[String], i: u32, what: &str| {
        table
            .get(i as usize)
            .cloned()
            .ok_or_else(|| DataError::Cache(format!("{what} index {i} out of range")))
    };
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let x = r
            .take(window * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        samples.push(WindowedSample {
            x,
            activity: activity[i] as usize,
            domain: domain[i] as usize,
            subject: lookup(&subjects, subject[i], "subject")?,
            provenance: Provenance {
                file: lookup(&files, file[i], "file")?,
                offset: offsets[i],
            },
        });
    }
    if r.pos != bytes.len() {
        return Err(DataError::Cache(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let set = SampleSet {
        nodes,
        channels,
        length,
        activity_names,
        domain_names,
        samples,
    };
    set.validate()?;
    Ok(set)
}

pub fn save(set: &SampleSet, path: &Path) -> Result<(), DataError> {
    fs::write(path, encode(set)).map_err(|e| io_err(path, e))
}

pub fn load(path: &Path) -> Result<SampleSet, DataError> {
    decode(&fs::read(path).map_err(|e| io_err(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthSpec};

    #[test]
    fn round_trip_synthetic() {
        let set = generate_synthetic(&SynthSpec { users: 2, windows_per_activity: 3, ..SynthSpec::default() }, 5).unwrap();
        let bytes = encode(&set);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(decode(&bytes).unwrap(), set);
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("s.cache");
        save(&set, &p).unwrap();
        assert_eq!(load(&p).unwrap(), set);
    }

    #[test]
    fn corrupt_inputs_are_errors() {
        let set = generate_synthetic(&SynthSpec { users: 2, windows_per_activity: 2, ..SynthSpec::default() }, 5).unwrap();
        let bytes = encode(&set);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(decode(&bad), Err(DataError::Cache(m)) if m.contains("version")));
        assert!(decode(b"nonsense").is_err());
    }
}
