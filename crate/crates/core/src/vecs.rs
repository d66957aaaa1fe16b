//! Readers and writers for the `fvecs`, `bvecs` and `ivecs` formats used by
//! the SIFT/GIST benchmark distributions.
//!
//! Each record is `[d: i32 LE][d elements]` where an element is an `f32 LE`,
//! a `u8`, or an `i32 LE` respectively. All records in a file share `d`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

struct Records<'a> {
    dim: usize,
    bodies: Vec<&'a [u8]>,
}

fn split_records<'a>(bytes: &'a [u8], elem_size: usize, path: &Path) -> Result<Records<'a>> {
    let fail = |record: usize, offset: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        record,
        offset: offset as u64,
        msg,
    };
    if bytes.is_empty() {
        return Err(Error::NoRecords {
            path: path.to_path_buf(),
        });
    }
    let mut dim = None;
    let mut bodies = Vec::new();
    let mut off = 0usize;
    while off < bytes.len() {
        let record = bodies.len();
        let header = bytes
            .get(off..off + 4)
            .ok_or_else(|| fail(record, off, "truncated dimension header".into()))?;
        let d = i32::from_le_bytes(header.try_into().unwrap());
        if d <= 0 {
            return Err(fail(record, off, format!("invalid dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(fail(
                    record,
                    off,
                    format!("dimension {d} differs from first record's {expected}"),
                ))
            }
            Some(_) => {}
        }
        let start = off + 4;
        let end = start + d * elem_size;
        let body = bytes.get(start..end).ok_or_else(|| {
            fail(
                record,
                off,
                format!(
                    "truncated record: need {} bytes, have {}",
                    d * elem_size,
                    bytes.len() - start
                ),
            )
        })?;
        bodies.push(body);
        off = end;
    }
    Ok(Records {
        dim: dim.expect("at least one record"),
        bodies,
    })
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_owned())
}

pub fn parse_fvecs(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let recs = split_records(bytes, 4, path)?;
    let mut data = Vec::with_capacity(recs.bodies.len() * recs.dim);
    for (i, body) in recs.bodies.iter().enumerate() {
        for (j, w) in body.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(w.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    record: i,
                    offset: (body.as_ptr() as usize - bytes.as_ptr() as usize + 4 * j) as u64,
                    msg: format!("non-finite value {v}"),
                });
            }
            data.push(v);
        }
    }
    Dataset::new(dataset_name(path), recs.dim, data)
}

pub fn parse_bvecs(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let recs = split_records(bytes, 1, path)?;
    let data = recs
        .bodies
        .iter()
        .flat_map(|b| b.iter().map(|&v| v as f32))
        .collect();
    Dataset::new(dataset_name(path), recs.dim, data)
}

pub fn parse_ivecs(bytes: &[u8], path: &Path) -> Result<Vec<Vec<i32>>> {
    let recs = split_records(bytes, 4, path)?;
    Ok(recs
        .bodies
        .iter()
        .map(|b| {
            b.chunks_exact(4)
                .map(|w| i32::from_le_bytes(w.try_into().unwrap()))
                .collect()
        })
        .collect())
}

pub fn load_fvecs(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    parse_fvecs(&fs::read(path)?, path)
}

pub fn load_bvecs(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    parse_bvecs(&fs::read(path)?, path)
}

pub fn load_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<i32>>> {
    let path = path.as_ref();
    parse_ivecs(&fs::read(path)?, path)
}

/// Loads `.fvecs` or `.bvecs` based on the file extension.
pub fn load_vectors(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("bvecs") => load_bvecs(path),
        Some("fvecs") => load_fvecs(path),
        _ => Err(Error::param(format!(
            "{}: expected a .fvecs or .bvecs file",
            path.display()
        ))),
    }
}

pub fn encode_fvecs(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(ds.len() * (4 + 4 * ds.dim()));
    for row in ds.rows() {
        out.extend_from_slice(&(ds.dim() as i32).to_le_bytes());
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn encode_ivecs(rows: &[Vec<i32>]) -> Vec<u8> {
    let mut out = Vec::new();
    for row in rows {
        out.extend_from_slice(&(row.len() as i32).to_le_bytes());
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_fvecs(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_fvecs(ds))?;
    Ok(())
}

pub fn write_ivecs(path: impl AsRef<Path>, rows: &[Vec<i32>]) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_ivecs(rows))?;
    Ok(())
}
