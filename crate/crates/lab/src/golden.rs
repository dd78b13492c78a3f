//! Golden matrix files.
//!
//! Layout: the magic bytes `ATNM`, little-endian `u32` rows, little-endian
//! `u32` cols, then `rows * cols` little-endian binary32 values in row-major
//! order. Nothing follows the payload.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use etap_core::Matrix;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"ATNM";

#[derive(Debug, Error)]
pub enum GoldenError {
    #[error("bad magic {0:?}, expected ATNM")]
    BadMagic([u8; 4]),
    #[error("truncated golden file: need {needed} bytes, have {actual}")]
    Truncated { needed: usize, actual: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("matrix is too large for a golden file ({rows}x{cols})")]
    TooLarge { rows: usize, cols: usize },
    #[error("invalid matrix: {0}")]
    Matrix(#[from] etap_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Serialize `m`, narrowing every entry to binary32.
pub fn encode(m: &Matrix) -> Result<Vec<u8>, GoldenError> {
    let (rows, cols) = m.shape();
    let too_large = || GoldenError::TooLarge { rows, cols };
    let r = u32::try_from(rows).map_err(|_| too_large())?;
    let c = u32::try_from(cols).map_err(|_| too_large())?;
    let mut out = Vec::with_capacity(12 + 4 * m.data().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&r.to_le_bytes());
    out.extend_from_slice(&c.to_le_bytes());
    for &x in m.data() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Matrix, GoldenError> {
    if bytes.len() < 12 {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(GoldenError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(GoldenError::Truncated {
            needed: 12,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(GoldenError::BadMagic(magic));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let needed = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(12))
        .ok_or(GoldenError::TooLarge { rows, cols })?;
    if bytes.len() < needed {
        return Err(GoldenError::Truncated {
            needed,
            actual: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(GoldenError::TrailingBytes(bytes.len() - needed));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Matrix::new(rows, cols, data)?)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<(), GoldenError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(m)?)?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix, GoldenError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_byte_layout() {
        let m = Matrix::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let bytes = encode(&m).unwrap();
        let mut expected = b"ATNM".to_vec();
        expected.extend([1, 0, 0, 0, 3, 0, 0, 0]);
        expected.extend([0x00, 0x00, 0x80, 0x3f]); // 1.0f32
        expected.extend([0x00, 0x00, 0x00, 0xc0]); // -2.0f32
        expected.extend([0x00, 0x00, 0x00, 0x3f]); // 0.5f32
        assert_eq!(bytes, expected);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let bytes = encode(&m).unwrap();
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(decode(&wrong), Err(GoldenError::BadMagic(_))));
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1]),
            Err(GoldenError::Truncated {
                needed: 28,
                actual: 27
            })
        ));
        assert!(matches!(
            decode(&bytes[..6]),
            Err(GoldenError::Truncated { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode(&long), Err(GoldenError::TrailingBytes(1))));
    }

    #[test]
    fn zero_sized_header_is_invalid() {
        let mut bytes = b"ATNM".to_vec();
        bytes.extend([0, 0, 0, 0, 1, 0, 0, 0]);
        assert!(matches!(decode(&bytes), Err(GoldenError::Matrix(_))));
    }
}
