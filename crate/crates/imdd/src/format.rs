//! Binary container for datasets and models, plus CSV export.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "IMDD" | u16 version | u8 kind | u8 scheme | u32 rows | u32 columns | u32 block_len
//! rows·columns·block_len f64 | label count u16 | u32 meta length | UTF-8 metadata
//! ```
//!
//! Datasets carry `rows·columns` labels, models none.

use std::fs;
use std::io::Write;
use std::path::Path;

use imdd_core::datasets::{DatasetMeta, RecordedDataset, SchemeTag};

use crate::error::{io_err, HarnessError};

pub const MAGIC: &[u8; 4] = b"IMDD";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 1 + 4 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FileKind {
    Dataset = 0,
    Model = 1,
}

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("not an IMDD file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {0} (expected {VERSION})")]
    UnsupportedVersion(u16),
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("expected a {expected:?} file, found kind {found}")]
    WrongKind { expected: FileKind, found: u8 },
}

/// Decoded container contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: FileKind,
    pub scheme: u8,
    pub rows: u32,
    pub columns: u32,
    pub block_len: u32,
    pub data: Vec<f64>,
    pub labels: Vec<u16>,
    pub metadata: String,
}

impl Container {
    fn label_count(kind: FileKind, rows: u32, columns: u32) -> usize {
        match kind {
            FileKind::Dataset => rows as usize * columns as usize,
            FileKind::Model => 0,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 8 + self.labels.len() * 2 + 4 + self.metadata.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.push(self.scheme);
        out.extend_from_slice(&self.rows.to_le_bytes());
        out.extend_from_slice(&self.columns.to_le_bytes());
        out.extend_from_slice(&self.block_len.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(FormatError::BadMagic);
        }
        let version = u16::from_le_bytes(r.array("version")?);
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let kind = match r.take(1, "kind")?[0] {
            0 => FileKind::Dataset,
            1 => FileKind::Model,
            k => return Err(FormatError::Corrupt(format!("unknown file kind {k}"))),
        };
        let scheme = r.take(1, "scheme")?[0];
        let rows = u32::from_le_bytes(r.array("rows")?);
        let columns = u32::from_le_bytes(r.array("columns")?);
        let block_len = u32::from_le_bytes(r.array("block_len")?);
        let n_data = (rows as u64) * (columns as u64) * (block_len as u64);
        if n_data * 8 > (bytes.len() - r.pos) as u64 {
            return Err(FormatError::Truncated("sample data"));
        }
        let data = r
            .take(n_data as usize * 8, "sample data")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let n_labels = Self::label_count(kind, rows, columns);
        let labels = r
            .take(n_labels * 2, "labels")?
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        let meta_len = u32::from_le_bytes(r.array("metadata length")?) as usize;
        let metadata =
            String::from_utf8(r.take(meta_len, "metadata")?.to_vec()).map_err(|_| FormatError::Corrupt("metadata is not UTF-8".into()))?;
        if r.pos != bytes.len() {
            return Err(FormatError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Container {
            kind,
            scheme,
            rows,
            columns,
            block_len,
            data,
            labels,
            metadata,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        if self.bytes.len() - self.pos < n {
            return Err(FormatError::Truncated(what));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], FormatError> {
        Ok(self.take(N, what)?.try_into().expect("exact length"))
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(bytes).map_err(|e| io_err(path, e))
}

pub fn read_container(path: &Path, expected: FileKind) -> Result<Container, HarnessError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let c = Container::decode(&bytes).map_err(|e| HarnessError::Format {
        path: path.to_path_buf(),
        source: e,
    })?;
    if c.kind != expected {
        return Err(HarnessError::Format {
            path: path.to_path_buf(),
            source: FormatError::WrongKind {
                expected,
                found: c.kind as u8,
            },
        });
    }
    Ok(c)
}

pub fn dataset_to_container(ds: &RecordedDataset) -> Container {
    Container {
        kind: FileKind::Dataset,
        scheme: ds.meta.scheme as u8,
        rows: ds.rows() as u32,
        columns: ds.columns() as u32,
        block_len: ds.block_len() as u32,
        data: ds.data().to_vec(),
        labels: ds.labels().to_vec(),
        metadata: serde_json::to_string(&ds.meta).expect("dataset metadata serializes"),
    }
}

pub fn container_to_dataset(c: Container) -> Result<RecordedDataset, FormatError> {
    let meta: DatasetMeta = serde_json::from_str(&c.metadata).map_err(|e| FormatError::Corrupt(format!("dataset metadata: {e}")))?;
    if SchemeTag::from_u8(c.scheme) != Some(meta.scheme) {
        return Err(FormatError::Corrupt("scheme byte disagrees with metadata".into()));
    }
    RecordedDataset::new(c.rows as usize, c.columns as usize, c.block_len as usize, c.data, c.labels, meta)
        .map_err(|e| FormatError::Corrupt(e.to_string()))
}

pub fn save_dataset(path: &Path, ds: &RecordedDataset) -> Result<(), HarnessError> {
    write_bytes(path, &dataset_to_container(ds).encode())
}

pub fn load_dataset(path: &Path) -> Result<RecordedDataset, HarnessError> {
    let c = read_container(path, FileKind::Dataset)?;
    container_to_dataset(c).map_err(|e| HarnessError::Format {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes the sample matrix, one dataset row per CSV record. With
/// `labels` set, the label matrix is written instead.
pub fn export_csv<W: std::io::Write>(ds: &RecordedDataset, labels: bool, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for r in 0..ds.rows() {
        if labels {
            w.write_record(ds.label_row(r).iter().map(|v| v.to_string()))?;
        } else {
            w.write_record(ds.data_row(r).iter().map(|v| format!("{v:?}")))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        Container {
            kind: FileKind::Dataset,
            scheme: 1,
            rows: 2,
            columns: 3,
            block_len: 2,
            data: (0..12).map(|v| v as f64 * 0.1 - 0.3).collect(),
            labels: vec![0, 1, 1, 0, 1, 0],
            metadata: "{\"k\": 1}".into(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = c.encode();
        let back = Container::decode(&bytes).unwrap();
        assert_eq!(back, c);
        assert!(back.data.iter().zip(&c.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn distinct_errors() {
        let bytes = sample().encode();
        assert!(matches!(
            Container::decode(&bytes[..bytes.len() - 3]),
            Err(FormatError::Truncated(_))
        ));
        assert!(matches!(Container::decode(&bytes[..10]), Err(FormatError::Truncated(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Container::decode(&bad), Err(FormatError::BadMagic)));
        let mut ver = bytes.clone();
        ver[4] = 9;
        assert!(matches!(Container::decode(&ver), Err(FormatError::UnsupportedVersion(9))));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(Container::decode(&long), Err(FormatError::Corrupt(_))));
    }
}
