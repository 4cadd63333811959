//! Persistence: a small binary snapshot format for named matrices and CSV
//! exports of ensembles, grid fields and histograms.
//!
//! Snapshot layout, all integers little-endian:
//!
//! ```text
//! b"ENDASNAP"  u32 version (=1)  u32 record count
//! per record:  u32 name length, UTF-8 name, u64 rows, u64 cols,
//!              rows*cols f64 values in row-major order
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::ensemble::Ensemble;
use crate::error::{EndaError, Result};
use crate::metrics::Histogram;
use crate::priors::KLBasis;

const MAGIC: &[u8; 8] = b"ENDASNAP";
const VERSION: u32 = 1;

/// Named row-major matrix inside a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Record {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(EndaError::DimensionMismatch(format!(
                "record with {} values for shape {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            rows,
            cols,
            data,
        })
    }

    pub fn from_matrix(name: impl Into<String>, m: &DMatrix<f64>) -> Self {
        let data = m.transpose().as_slice().to_vec();
        Self {
            name: name.into(),
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    pub records: Vec<Record>,
}

impl Snapshot {
    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn get(&self, name: &str) -> Result<&Record> {
        self.records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| EndaError::Format(format!("snapshot has no record `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
            out.extend_from_slice(r.name.as_bytes());
            out.extend_from_slice(&(r.rows as u64).to_le_bytes());
            out.extend_from_slice(&(r.cols as u64).to_le_bytes());
            for v in &r.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(EndaError::Format("not a snapshot file".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(EndaError::Format(format!("unsupported snapshot version {version}")));
        }
        let count = cur.u32()? as usize;
        let mut records = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = cur.u32()? as usize;
            let name = String::from_utf8(cur.take(len)?.to_vec())
                .map_err(|_| EndaError::Format("record name is not UTF-8".into()))?;
            let rows = cur.u64()? as usize;
            let cols = cur.u64()? as usize;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= bytes.len()))
                .ok_or_else(|| EndaError::Format(format!("record `{name}` is truncated")))?;
            let raw = cur.take(n * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            records.push(Record { name, rows, cols, data });
        }
        if cur.pos != bytes.len() {
            return Err(EndaError::Format("trailing bytes after snapshot".into()));
        }
        Ok(Self { records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| EndaError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| EndaError::io(path, e))?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| EndaError::Format("snapshot is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn kl_basis_snapshot(b: &KLBasis) -> Snapshot {
    let mut s = Snapshot::default();
    s.push(Record::from_matrix(
        "eigenvalues",
        &DMatrix::from_column_slice(b.size(), 1, b.eigenvalues.as_slice()),
    ));
    s.push(Record::from_matrix("eigenvectors", &b.eigenvectors));
    s.push(Record {
        name: "meta".into(),
        rows: 1,
        cols: 2,
        data: vec![b.mean_log_k, b.truncation() as f64],
    });
    s
}

pub fn kl_basis_from_snapshot(s: &Snapshot) -> Result<KLBasis> {
    let values = s.get("eigenvalues")?;
    let meta = s.get("meta")?;
    if meta.data.len() != 2 {
        return Err(EndaError::Format("malformed KL basis metadata".into()));
    }
    KLBasis::new(
        DVector::from_vec(values.data.clone()),
        s.get("eigenvectors")?.to_matrix(),
        meta.data[0],
        meta.data[1] as usize,
    )
}

pub fn ensemble_record(name: &str, e: &Ensemble) -> Record {
    Record {
        name: name.into(),
        rows: e.member_count(),
        cols: e.dim(),
        data: e.as_slice().to_vec(),
    }
}

pub fn ensemble_from_record(r: &Record) -> Result<Ensemble> {
    Ensemble::from_row_major(r.rows, r.cols, r.data.clone())
}

fn csv_err(path: &Path, e: csv::Error) -> EndaError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => EndaError::io(path, io),
        other => EndaError::Format(format!("{}: {other:?}", path.display())),
    }
}

/// One member per row under a `p0,p1,...` header.
pub fn write_ensemble_csv(path: &Path, e: &Ensemble) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|err| csv_err(path, err))?;
    w.write_record((0..e.dim()).map(|i| format!("p{i}")))
        .map_err(|err| csv_err(path, err))?;
    for row in e.members() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|err| csv_err(path, err))?;
    }
    w.flush().map_err(|err| EndaError::io(path, err))
}

pub fn read_ensemble_csv(path: &Path) -> Result<Ensemble> {
    let mut r = csv::Reader::from_path(path).map_err(|err| csv_err(path, err))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|err| csv_err(path, err))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|err| EndaError::Format(format!("{}: {err}", path.display())))?;
        rows.push(row);
    }
    Ensemble::from_rows(&rows)
}

/// An `n x n` grid field as `n` lines of `n` values, line `j` holding row `j`.
pub fn write_field_csv(path: &Path, values: &[f64], n: usize) -> Result<()> {
    if values.len() != n * n {
        return Err(EndaError::DimensionMismatch(format!(
            "{} values for an {n}x{n} grid",
            values.len()
        )));
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|err| csv_err(path, err))?;
    for row in values.chunks(n) {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|err| csv_err(path, err))?;
    }
    w.flush().map_err(|err| EndaError::io(path, err))
}

pub fn write_histogram_csv(path: &Path, h: &Histogram) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|err| csv_err(path, err))?;
    w.write_record(["bin_left", "bin_right", "density"])
        .map_err(|err| csv_err(path, err))?;
    for i in 0..h.bins() {
        w.write_record([
            h.edges[i].to_string(),
            h.edges[i + 1].to_string(),
            h.density[i].to_string(),
        ])
        .map_err(|err| csv_err(path, err))?;
    }
    w.flush().map_err(|err| EndaError::io(path, err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::GridSpec;
    use crate::metrics::weighted_histogram;
    use crate::priors::{exp_covariance, kl_basis, MEAN_LOG_K};

    #[test]
    fn snapshot_roundtrip() {
        let mut s = Snapshot::default();
        s.push(Record::new("a", 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, -0.0]).unwrap());
        s.push(Record::new("empty", 0, 4, vec![]).unwrap());
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..8], b"ENDASNAP");
        assert_eq!(Snapshot::from_bytes(&bytes).unwrap(), s);
        assert!(Snapshot::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Snapshot::from_bytes(&bad).is_err());
    }

    #[test]
    fn matrix_record_is_row_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let r = Record::from_matrix("m", &m);
        assert_eq!(r.data, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(r.to_matrix(), m);
    }

    #[test]
    fn kl_basis_roundtrip() {
        let g = GridSpec::new(4).unwrap();
        let b = kl_basis(&exp_covariance(&g, 0.5).unwrap(), MEAN_LOG_K)
            .unwrap()
            .with_truncation(3)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.snap");
        kl_basis_snapshot(&b).write(&path).unwrap();
        let back = kl_basis_from_snapshot(&Snapshot::read(&path).unwrap()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn ensemble_csv_roundtrip() {
        let e = Ensemble::from_rows(&[[0.1, -2.5e-7], [3.0, 1.0 / 3.0]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        write_ensemble_csv(&path, &e).unwrap();
        assert!(fs::read_to_string(&path).unwrap().starts_with("p0,p1\n"));
        assert_eq!(read_ensemble_csv(&path).unwrap(), e);
    }

    #[test]
    fn field_and_histogram_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_field_csv(&path, &[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "1,2\n3,4\n");
        assert!(write_field_csv(&path, &[1.0], 2).is_err());

        let h = weighted_histogram(&[0.0, 1.0], None, 0.0, 1.0, 2).unwrap();
        let hp = dir.path().join("pdf_u.csv");
        write_histogram_csv(&hp, &h).unwrap();
        assert_eq!(
            fs::read_to_string(&hp).unwrap(),
            "bin_left,bin_right,density\n0,0.5,1\n0.5,1,1\n"
        );
    }
}
