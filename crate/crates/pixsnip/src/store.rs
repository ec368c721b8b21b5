//! Embedding file format.
//!
//! Little-endian layout: magic `VC2E`, version u32, count u64, dim u32, then
//! `count x dim` float32 rows, then the id table (per id: length u32, utf8
//! bytes). Rows must be unit-norm; norms are re-validated on read to catch
//! corruption. Files are write-once and portable across machines.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"VC2E";
pub const EMBEDDING_VERSION: u32 = 1;
const NORM_TOLERANCE: f64 = 1e-5;

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Truncated {
        path: path.to_path_buf(),
        msg: format!("unexpected end of file reading {what}"),
    })
}

pub fn write_embeddings(path: &Path, ids: &[String], vectors: &[Vec<f32>]) -> Result<()> {
    if ids.len() != vectors.len() {
        return Err(Error::DimMismatch(format!(
            "{} ids vs {} vectors",
            ids.len(),
            vectors.len()
        )));
    }
    let dim = vectors.first().map_or(0, Vec::len);
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::DimMismatch(format!(
                "vector {i} has dim {}, expected {dim}",
                v.len()
            )));
        }
    }
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&EMBEDDING_MAGIC)?;
    w.write_all(&EMBEDDING_VERSION.to_le_bytes())?;
    w.write_all(&(ids.len() as u64).to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    for v in vectors {
        for x in v {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    for id in ids {
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<(Vec<String>, Vec<Vec<f32>>)> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path, "magic")?;
    if magic != EMBEDDING_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: EMBEDDING_MAGIC,
        });
    }
    let mut buf4 = [0u8; 4];
    read_exact(&mut r, &mut buf4, path, "version")?;
    let version = u32::from_le_bytes(buf4);
    if version != EMBEDDING_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version,
        });
    }
    let mut buf8 = [0u8; 8];
    read_exact(&mut r, &mut buf8, path, "count")?;
    let count = u64::from_le_bytes(buf8) as usize;
    read_exact(&mut r, &mut buf4, path, "dim")?;
    let dim = u32::from_le_bytes(buf4) as usize;

    let mut vectors = Vec::with_capacity(count);
    for row in 0..count {
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            read_exact(&mut r, &mut buf4, path, "row data")?;
            v.push(f32::from_le_bytes(buf4));
        }
        let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NormViolation { row, norm });
        }
        vectors.push(v);
    }
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        read_exact(&mut r, &mut buf4, path, "id length")?;
        let len = u32::from_le_bytes(buf4) as usize;
        let mut bytes = vec![0u8; len];
        read_exact(&mut r, &mut bytes, path, "id bytes")?;
        ids.push(String::from_utf8(bytes).map_err(|_| Error::Truncated {
            path: path.to_path_buf(),
            msg: "id table is not valid utf-8".into(),
        })?);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            msg: "trailing bytes after id table".into(),
        });
    }
    Ok((ids, vectors))
}
