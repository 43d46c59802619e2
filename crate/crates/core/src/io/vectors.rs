use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{SampleMatrix, Scale};

pub const VECTOR_MAGIC: &[u8; 4] = b"NVEC";
pub const VECTOR_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 1 + 8 + 8 + 8 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorDtype {
    F32,
    F64,
}

impl VectorDtype {
    fn code(self) -> u8 {
        match self {
            VectorDtype::F32 => 0,
            VectorDtype::F64 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            VectorDtype::F32 => 4,
            VectorDtype::F64 => 8,
        }
    }
}

/// Layout (little-endian): magic "NVEC", u8 version, u8 dtype (0 = f32,
/// 1 = f64), u64 rows, u64 cols, f64 scale offset, f64 scale factor, values.
pub fn encode_vectors(data: &SampleMatrix, dtype: VectorDtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + data.values().len() * dtype.width());
    out.extend_from_slice(VECTOR_MAGIC);
    out.push(VECTOR_VERSION);
    out.push(dtype.code());
    out.extend_from_slice(&(data.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(data.cols() as u64).to_le_bytes());
    out.extend_from_slice(&data.scale().offset.to_le_bytes());
    out.extend_from_slice(&data.scale().factor.to_le_bytes());
    for &v in data.values() {
        match dtype {
            VectorDtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            VectorDtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn decode_vectors(bytes: &[u8]) -> Result<SampleMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated vector file header"));
    }
    if &bytes[..4] != VECTOR_MAGIC {
        return Err(Error::format(0, "expected magic \"NVEC\""));
    }
    if bytes[4] != VECTOR_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "vector file",
            version: bytes[4] as u32,
        });
    }
    let dtype = match bytes[5] {
        0 => VectorDtype::F32,
        1 => VectorDtype::F64,
        other => return Err(Error::format(5, format!("unknown dtype code {other}"))),
    };
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let rows = usize::try_from(u64_at(6)).map_err(|_| Error::format(6, "row count too large"))?;
    let cols = usize::try_from(u64_at(14)).map_err(|_| Error::format(14, "column count too large"))?;
    let scale = Scale {
        offset: f64_at(22),
        factor: f64_at(30),
    };
    if !(scale.offset.is_finite() && scale.factor.is_finite() && scale.factor != 0.0) {
        return Err(Error::format(22, "scale must be finite with a nonzero factor"));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(dtype.width()))
        .and_then(|c| c.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(6, "dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            bytes.len().min(expected) as u64,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let body = &bytes[HEADER_LEN..];
    let values: Vec<f64> = match dtype {
        VectorDtype::F32 => body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        VectorDtype::F64 => body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if rows == 0 {
        return Ok(SampleMatrix::empty(cols.max(1)).with_scale(scale));
    }
    Ok(SampleMatrix::new(rows, cols, values)?.with_scale(scale))
}

pub fn save_vectors(path: impl AsRef<Path>, data: &SampleMatrix, dtype: VectorDtype) -> Result<()> {
    std::fs::write(path.as_ref(), encode_vectors(data, dtype))?;
    Ok(())
}

pub fn load_vectors(path: impl AsRef<Path>) -> Result<SampleMatrix> {
    decode_vectors(&std::fs::read(path.as_ref())?)
}
