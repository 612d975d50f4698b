//! Binary matrix container and little-endian helpers shared by the
//! checkpoint formats. Every artifact starts with a short ASCII magic string
//! so that loading the wrong file fails loudly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Magic string of the dense matrix container.
pub const MATRIX_MAGIC: &[u8] = b"MATv1";

pub(crate) fn write_magic<W: Write>(w: &mut W, magic: &[u8]) -> Result<()> {
    w.write_all(magic)?;
    Ok(())
}

pub(crate) fn expect_magic<R: Read>(r: &mut R, magic: &[u8], what: &str) -> Result<()> {
    let mut buf = vec![0u8; magic.len()];
    r.read_exact(&mut buf)?;
    if buf != magic {
        return Err(Error::Format(format!(
            "{what}: bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&buf),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn write_u8<W: Write>(w: &mut W, v: u8) -> Result<()> {
    w.write_all(&[v])?;
    Ok(())
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf)?;
    Ok(buf[0])
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

/// Writes a matrix as `MATv1`, rows, cols, then row-major little-endian f64.
pub fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_magic(&mut w, MATRIX_MAGIC)?;
    write_u64(&mut w, m.nrows() as u64)?;
    write_u64(&mut w, m.ncols() as u64)?;
    for row in m.rows() {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, MATRIX_MAGIC, &format!("matrix {}", path.display()))?;
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    let data = read_f64s(&mut r, rows * cols)?;
    Matrix::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Format(format!("matrix {}: {e}", path.display())))
}
