//! Embedding and cluster-assignment export.
//!
//! CSV rows are `node_id,node_type,v0,...` where `node_id` is the global node
//! index (users first, then items). The binary embedding file is `CGCFEMB1`,
//! followed by little-endian `u64` user count, item count and dimension, a
//! `u32` value width (4 or 8 bytes) and the row-major values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dataset::{read_u32, read_u64, ReadError};
use crate::dense::DenseMatrix;
use crate::error::{invalid_arg, Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 8] = b"CGCFEMB1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

fn node_type(node: usize, n_users: usize) -> &'static str {
    if node < n_users {
        "user"
    } else {
        "item"
    }
}

fn write_rows(path: &Path, m: &DenseMatrix, n_users: usize, prefix: &str, precision: Precision) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let header: Vec<String> = (0..m.n_cols()).map(|j| format!("{prefix}{j}")).collect();
    writeln!(w, "node_id,node_type,{}", header.join(",")).map_err(io)?;
    for r in 0..m.n_rows() {
        write!(w, "{r},{}", node_type(r, n_users)).map_err(io)?;
        for &v in m.row(r) {
            match precision {
                Precision::F64 => write!(w, ",{v}"),
                Precision::F32 => write!(w, ",{}", v as f32),
            }
            .map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_embeddings_csv(path: &Path, emb: &DenseMatrix, n_users: usize, precision: Precision) -> Result<()> {
    write_rows(path, emb, n_users, "e", precision)
}

pub fn write_clusters_csv(path: &Path, probs: &DenseMatrix, n_users: usize) -> Result<()> {
    write_rows(path, probs, n_users, "p", Precision::F64)
}

/// Reads a CSV written by [`write_embeddings_csv`] or
/// [`write_clusters_csv`]. Returns the matrix and the number of user rows.
pub fn read_node_csv(path: &Path) -> Result<(DenseMatrix, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err(1, "missing header".into())),
    };
    let n_cols = header.split(',').count().saturating_sub(2);
    let mut data = Vec::new();
    let mut n_users = 0;
    let mut n_rows = 0;
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let id: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(lineno, "bad node id".into()))?;
        if id != n_rows {
            return Err(parse_err(lineno, format!("expected node {n_rows}, found {id}")));
        }
        match fields.next() {
            Some("user") => {
                if n_users != n_rows {
                    return Err(parse_err(lineno, "user rows must precede item rows".into()));
                }
                n_users += 1;
            }
            Some("item") => {}
            other => return Err(parse_err(lineno, format!("bad node type {other:?}"))),
        }
        let before = data.len();
        for f in fields {
            data.push(
                f.parse::<f64>()
                    .map_err(|e| parse_err(lineno, format!("bad value {f:?}: {e}")))?,
            );
        }
        if data.len() - before != n_cols {
            return Err(parse_err(lineno, format!("expected {n_cols} values")));
        }
        n_rows += 1;
    }
    Ok((DenseMatrix::from_vec(n_rows, n_cols, data)?, n_users))
}

pub fn write_embeddings_bin(path: &Path, emb: &DenseMatrix, n_users: usize, precision: Precision) -> Result<()> {
    if n_users > emb.n_rows() {
        return Err(invalid_arg!("more users than embedding rows"));
    }
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let mut write = || -> std::io::Result<()> {
        w.write_all(EMBEDDING_MAGIC)?;
        for v in [n_users, emb.n_rows() - n_users, emb.n_cols()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        match precision {
            Precision::F32 => {
                w.write_all(&4u32.to_le_bytes())?;
                for v in emb.to_f32() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            Precision::F64 => {
                w.write_all(&8u32.to_le_bytes())?;
                for v in emb.as_slice() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        w.flush()
    };
    write().map_err(io)
}

pub fn read_embeddings_bin(path: &Path) -> Result<(DenseMatrix, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let read = |r: &mut BufReader<File>| -> Result<(usize, usize, Vec<f64>), ReadError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != EMBEDDING_MAGIC {
            return Err(ReadError::Format("not an embedding file (bad magic)".into()));
        }
        let n_users = read_u64(r)? as usize;
        let n_items = read_u64(r)? as usize;
        let dim = read_u64(r)? as usize;
        let width = read_u32(r)?;
        let n = (n_users + n_items) * dim;
        let mut data = Vec::with_capacity(n.min(1 << 26));
        for _ in 0..n {
            data.push(match width {
                4 => f32::from_bits(read_u32(r)?) as f64,
                8 => f64::from_bits(read_u64(r)?),
                w => return Err(ReadError::Format(format!("unsupported value width {w}"))),
            });
        }
        Ok((n_users, dim, data))
    };
    let (n_users, dim, data) = read(&mut r).map_err(|e| match e {
        ReadError::Io(e) => Error::io(path, e),
        ReadError::Format(m) => Error::Format(m),
    })?;
    let n_rows = if dim == 0 { 0 } else { data.len() / dim };
    Ok((DenseMatrix::from_vec(n_rows, dim, data)?, n_users))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_and_binary_round_trip(
            n_users in 0usize..5, n_items in 1usize..5, dim in 1usize..4,
            seed in proptest::collection::vec(-1e3f64..1e3, 40)
        ) {
            let m = DenseMatrix::from_fn(n_users + n_items, dim, |r, c| seed[(r * dim + c) % seed.len()] / (r + 1) as f64);
            let dir = tempfile::tempdir().unwrap();
            let csv = dir.path().join("e.csv");
            write_embeddings_csv(&csv, &m, n_users, Precision::F64).unwrap();
            prop_assert_eq!(read_node_csv(&csv).unwrap(), (m.clone(), n_users));
            let bin = dir.path().join("e.bin");
            write_embeddings_bin(&bin, &m, n_users, Precision::F64).unwrap();
            prop_assert_eq!(read_embeddings_bin(&bin).unwrap(), (m.clone(), n_users));
            write_embeddings_bin(&bin, &m, n_users, Precision::F32).unwrap();
            let (back, _) = read_embeddings_bin(&bin).unwrap();
            let expect = DenseMatrix::from_vec(m.n_rows(), dim, m.to_f32().into_iter().map(f64::from).collect()).unwrap();
            prop_assert_eq!(back, expect);
        }
    }

    #[test]
    fn csv_layout() {
        let m = DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_clusters_csv(&p, &m, 1).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "node_id,node_type,p0,p1\n0,user,0.5,0.5\n1,item,0.25,0.75\n");
    }
}
