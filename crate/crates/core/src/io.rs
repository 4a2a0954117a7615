//! On-disk formats shared by the curvature and subspace stages.
//!
//! Binary matrix block (all integers and floats little-endian):
//!
//! ```text
//! magic   8 bytes   b"LRLAMAT1"
//! rows    u64
//! cols    u64
//! data    rows*cols f64, row-major
//! ```
//!
//! A curvature factor file is `b"LRLACUR1"`, then `N: u64`, `C: u64`, then a
//! matrix block holding `V`. A projector file is `b"LRLAPRJ1"`, then the kind
//! tag as `u32` byte length plus UTF-8 bytes, then a matrix block holding `P`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const MATRIX_MAGIC: &[u8; 8] = b"LRLAMAT1";
pub const CURVATURE_MAGIC: &[u8; 8] = b"LRLACUR1";
pub const PROJECTOR_MAGIC: &[u8; 8] = b"LRLAPRJ1";

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn encode_matrix(m: &DenseMatrix, out: &mut Vec<u8>) {
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    out.reserve(m.nrows() * m.ncols() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "unexpected end of data at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let got = self.take(8)?;
        if got != expected {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn matrix(&mut self) -> Result<DenseMatrix> {
        self.magic(MATRIX_MAGIC)?;
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Format("matrix dimensions overflow".into()))?;
        let data = self.take(len)?;
        let values: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(DenseMatrix::from_row_slice(rows, cols, &values))
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut buf = Vec::new();
    encode_matrix(m, &mut buf);
    write_atomic(path, &buf)
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = read_all(path)?;
    let mut r = Reader::new(&bytes);
    let m = r.matrix()?;
    r.finish()?;
    Ok(m)
}

pub(crate) fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(bytes)
}
