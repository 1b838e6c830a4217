//! `ODM1` dense matrix container.
//!
//! Layout: the 4 magic bytes `ODM1`, rows and cols as little-endian `u64`,
//! then `rows * cols` little-endian IEEE-754 `f64` values in column-major
//! order. Several records may be concatenated in one file.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 4] = b"ODM1";
const HEADER_LEN: usize = 4 + 8 + 8;

pub fn encode_matrix(m: &Matrix, out: &mut Vec<u8>) {
    out.reserve(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn perr(offset: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        what: "odm",
        offset,
        msg: msg.into(),
    }
}

/// Decodes one record starting at `offset`; returns it with the offset of
/// the next record.
pub fn decode_matrix(bytes: &[u8], offset: usize) -> Result<(Matrix, usize)> {
    let rest = &bytes[offset..];
    if rest.len() < HEADER_LEN {
        return Err(perr(
            bytes.len(),
            format!("truncated header: expected {HEADER_LEN} bytes, got {}", rest.len()),
        ));
    }
    if &rest[..4] != MAGIC {
        return Err(perr(offset, "bad magic (expected ODM1)"));
    }
    let rows = u64::from_le_bytes(rest[4..12].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(rest[12..20].try_into().expect("8 bytes"));
    let need = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| perr(offset + 4, format!("{rows}x{cols} payload size overflows")))?;
    let payload = &rest[HEADER_LEN..];
    if payload.len() < need {
        return Err(perr(
            bytes.len(),
            format!(
                "truncated payload for {rows}x{cols} matrix: expected {need} bytes, got {}",
                payload.len()
            ),
        ));
    }
    let data = payload[..need]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let m = Matrix::from_col_major(rows as usize, cols as usize, data)?;
    Ok((m, offset + HEADER_LEN + need))
}

/// Decodes every concatenated record in `bytes`.
pub fn decode_all(bytes: &[u8]) -> Result<Vec<Matrix>> {
    let mut out = Vec::new();
    let mut off = 0;
    while off < bytes.len() {
        let (m, next) = decode_matrix(bytes, off)?;
        out.push(m);
        off = next;
    }
    Ok(out)
}

pub fn save_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    save_matrices(path, std::slice::from_ref(m))
}

pub fn save_matrices(path: impl AsRef<Path>, ms: &[Matrix]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for m in ms {
        encode_matrix(m, &mut buf);
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Loads a file holding exactly one record.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (m, end) = decode_matrix(&bytes, 0)?;
    if end != bytes.len() {
        return Err(perr(
            end,
            format!("{} trailing bytes after matrix record", bytes.len() - end),
        ));
    }
    Ok(m)
}

pub fn load_matrices(path: impl AsRef<Path>) -> Result<Vec<Matrix>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_all(&bytes)
}
