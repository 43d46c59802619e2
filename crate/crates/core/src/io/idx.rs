use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{SampleMatrix, Scale};

const U8_FACTOR: f64 = 255.0;

pub fn load_idx(path: impl AsRef<Path>) -> Result<SampleMatrix> {
    parse_idx(&std::fs::read(path.as_ref())?)
}

/// Big-endian IDX: two zero bytes, a dtype byte, a dimension count, then one
/// u32 per dimension. The first dimension indexes rows; the rest flatten.
/// Unsigned bytes are mapped to `[0, 1]` with scale factor 255.
pub fn parse_idx(bytes: &[u8]) -> Result<SampleMatrix> {
    if bytes.len() < 4 {
        return Err(Error::format(bytes.len() as u64, "truncated IDX header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::format(
            0,
            format!("bad IDX magic {:02x} {:02x}", bytes[0], bytes[1]),
        ));
    }
    let dtype = bytes[2];
    let width = match dtype {
        0x08 | 0x09 => 1,
        0x0b => 2,
        0x0c | 0x0d => 4,
        0x0e => 8,
        other => return Err(Error::format(2, format!("unknown IDX dtype 0x{other:02x}"))),
    };
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(Error::format(3, "IDX file declares zero dimensions"));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::format(bytes.len() as u64, "truncated IDX dimension list"));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let rows = dims[0];
    let cols: usize = dims[1..].iter().product();
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::format(4, "IDX dimensions overflow"))?;
    let needed = header + count * width;
    if bytes.len() < needed {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated IDX data: expected {needed} bytes, found {}", bytes.len()),
        ));
    }
    if bytes.len() > needed {
        return Err(Error::format(needed as u64, "trailing bytes after IDX data"));
    }
    if rows == 0 {
        return Ok(SampleMatrix::empty(cols.max(1)));
    }
    let data = &bytes[header..needed];
    let (values, scale): (Vec<f64>, Scale) = match dtype {
        0x08 => (
            data.iter().map(|&b| b as f64 / U8_FACTOR).collect(),
            Scale {
                offset: 0.0,
                factor: U8_FACTOR,
            },
        ),
        0x09 => (data.iter().map(|&b| b as i8 as f64).collect(), Scale::IDENTITY),
        0x0b => (
            data.chunks_exact(2)
                .map(|c| i16::from_be_bytes([c[0], c[1]]) as f64)
                .collect(),
            Scale::IDENTITY,
        ),
        0x0c => (
            data.chunks_exact(4)
                .map(|c| i32::from_be_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Scale::IDENTITY,
        ),
        0x0d => (
            data.chunks_exact(4)
                .map(|c| f32::from_be_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Scale::IDENTITY,
        ),
        _ => (
            data.chunks_exact(8)
                .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
                .collect(),
            Scale::IDENTITY,
        ),
    };
    Ok(SampleMatrix::new(rows, cols, values)?.with_scale(scale))
}
