//! Flat binary checkpoint format shared by the teacher and the student.
//!
//! Layout (all integers little-endian):
//!   magic [4 bytes] | version u32 | matrix count u32 |
//!   per matrix: rows u32 | cols u32 | rows*cols f64 values
//!
//! Model-specific structure (which matrix is which) is reconstructed by the
//! caller from the ordering, which is part of the format.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use std::io::{Read, Write};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

pub fn write_checkpoint<S: Scalar>(
    path: &Path,
    magic: &[u8; 4],
    matrices: &[&Matrix<S>],
) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(matrices.len() as u32).to_le_bytes());
    for m in matrices {
        buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for &v in m.data() {
            let x = v.to_f64().ok_or_else(|| Error::NonFinite {
                what: "checkpoint value".into(),
            })?;
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<S: Scalar>(path: &Path, magic: &[u8; 4]) -> Result<Vec<Matrix<S>>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{}: truncated at byte {}",
                path.display(),
                *pos
            )));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let found = take(&mut pos, 4)?;
    if found != magic {
        return Err(Error::Checkpoint(format!(
            "{}: expected magic {:?}, found {:?}",
            path.display(),
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(found)
        )));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported format version {version}",
            path.display()
        )));
    }
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut matrices = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let x = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
            data.push(S::from_f64_lossy(x));
        }
        matrices.push(Matrix::new(rows, cols, data)?);
    }
    if pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{}: {} trailing bytes",
            path.display(),
            bytes.len() - pos
        )));
    }
    Ok(matrices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let a = Matrix::from_rows(&[vec![1.0f64, -2.5e-300], vec![f64::MIN_POSITIVE, 4.0]]);
        let b = Matrix::from_rows(&[vec![0.1, 0.2, 0.3]]);
        write_checkpoint(&path, b"TEST", &[&a, &b]).unwrap();
        let loaded = read_checkpoint::<f64>(&path, b"TEST").unwrap();
        assert_eq!(loaded, vec![a, b]);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let a = Matrix::<f64>::zeros(1, 1);
        write_checkpoint(&path, b"AAAA", &[&a]).unwrap();
        let err = read_checkpoint::<f64>(&path, b"BBBB").unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");
    }
}
