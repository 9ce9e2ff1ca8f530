use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numfmt::sig9;

/// Precomputed sentence vectors keyed by example id.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTable {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl VectorTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("vector dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        })
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: &[f64]) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                row: self.ids.len() + 1,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if let Some(bad) = vector.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vector {id:?} contains {bad}")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index
            .get(id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dim))
            .map(|(id, v)| (id.as_str(), v))
    }
}

/// Reads a `dim=<N>` header followed by `<id>\t<v1>\t...\t<vN>` rows.
pub fn load_vectors(path: impl AsRef<Path>) -> Result<VectorTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();

    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .ok_or_else(|| Error::parse(path, 1, "missing dim=<N> header"))?;
    let dim: usize = header
        .trim()
        .strip_prefix("dim=")
        .and_then(|d| d.parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::parse(path, 1, format!("bad header {header:?}")))?;

    let mut table = VectorTable::new(dim)?;
    let mut values = Vec::with_capacity(dim);
    for (n, line) in lines.enumerate() {
        let line_no = n + 2;
        let row = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default();
        values.clear();
        for f in fields {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("not a number: {f:?}")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("row {row} ({id:?}) contains {f}")));
            }
            values.push(v);
        }
        if values.len() != dim {
            return Err(Error::DimensionMismatch {
                row,
                expected: dim,
                found: values.len(),
            });
        }
        table.insert(id, &values)?;
    }
    Ok(table)
}

pub fn write_vectors(table: &VectorTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "dim={}", table.dim()).map_err(io)?;
    for (id, v) in table.iter() {
        write!(out, "{id}").map_err(io)?;
        for x in v {
            write!(out, "\t{}", sig9(*x)).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_rows_dim_four() {
        let f = write_tmp("dim=4\na\t1\t2\t3\t4\nb\t0\t0\t0\t0\nc\t-1.5\t2e-3\t0.25\t9\n");
        let t = load_vectors(f.path()).unwrap();
        assert_eq!((t.len(), t.dim()), (3, 4));
        assert_eq!(t.get("c").unwrap(), &[-1.5, 0.002, 0.25, 9.0]);
    }

    #[test]
    fn short_row_is_dimension_mismatch() {
        let f = write_tmp("dim=4\na\t1\t2\t3\t4\nb\t1\t2\t3\n");
        match load_vectors(f.path()).unwrap_err() {
            Error::DimensionMismatch {
                row,
                expected,
                found,
            } => {
                assert_eq!((row, expected, found), (2, 4, 3))
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_non_finite_and_duplicates() {
        let f = write_tmp("dim=2\na\t1\tNaN\n");
        assert!(matches!(
            load_vectors(f.path()).unwrap_err(),
            Error::NonFinite(_)
        ));
        let f = write_tmp("dim=2\na\t1\tinf\n");
        assert!(matches!(
            load_vectors(f.path()).unwrap_err(),
            Error::NonFinite(_)
        ));
        let f = write_tmp("dim=1\na\t1\na\t2\n");
        assert!(matches!(
            load_vectors(f.path()).unwrap_err(),
            Error::DuplicateId(_)
        ));
    }

    #[test]
    fn wide_vectors_round_trip_at_nine_digits() {
        let mut t = VectorTable::new(512).unwrap();
        for r in 0..3 {
            let v: Vec<f64> = (0..512).map(|i| ((i * 7 + r) as f64).sin() / 3.0).collect();
            t.insert(format!("tweet{r}"), &v).unwrap();
        }
        let f = tempfile::NamedTempFile::new().unwrap();
        write_vectors(&t, f.path()).unwrap();
        let back = load_vectors(f.path()).unwrap();
        assert_eq!(back.dim(), 512);
        assert_eq!(back.len(), 3);
        for (id, v) in t.iter() {
            let w = back.get(id).unwrap();
            for (a, b) in v.iter().zip(w) {
                assert_eq!(sig9(*a), sig9(*b));
                assert!((a - b).abs() <= 5e-9 * a.abs().max(1e-300));
            }
        }
    }
}
